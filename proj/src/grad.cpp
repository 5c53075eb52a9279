#include "leanpo/grad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace leanpo {

std::string Shape::str() const {
  std::ostringstream os;
  switch (rank) {
    case 0: os << "[]"; break;
    case 1: os << "[" << cols << "]"; break;
    default: os << "[" << rows << "x" << cols << "]"; break;
  }
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(s), data(std::move(values)) {
  if (data.size() != shape.size()) {
    throw InvalidInput("tensor: " + std::to_string(data.size()) + " values for shape " +
                       shape.str());
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape::vector(n), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape::matrix(rows, cols), std::move(values));
}

double Tensor::item() const {
  if (data.size() != 1) throw InvalidInput("item() on tensor of shape " + shape.str());
  return data[0];
}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::log_sigmoid: return "log_sigmoid";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_softmax_rows: return "log_softmax_rows";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::scale: return "scale";
    case OpKind::transpose: return "transpose";
  }
  return "?";
}

const Tensor& Value::data() const { return tape_->nodes_.at(id_).data; }

const Tensor* Value::grad() const {
  const auto& n = tape_->nodes_.at(id_);
  return n.has_grad ? &n.grad : nullptr;
}

Value Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Value(this, static_cast<int>(nodes_.size() - 1));
}

Value Tape::constant(Tensor t) {
  Node n;
  n.data = std::move(t);
  return push(std::move(n));
}

Value Tape::parameter(Parameter& p) {
  Node n;
  n.data = p.value;
  n.param = &p;
  return push(std::move(n));
}

Tensor& Tape::grad_of(int id) {
  auto& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.data.shape);
    n.has_grad = true;
  }
  return n.grad;
}

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_scalar(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

bool is_scalar(const Shape& s) { return s.size() == 1 && s.rank == 0; }

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
  throw InvalidInput(std::string(to_string(kind)) + ": shape mismatch " + a.str() + " vs " + b.str());
}

void require_matrix(OpKind kind, const Shape& s) {
  if (s.rank != 2) {
    throw InvalidInput(std::string(to_string(kind)) + ": requires a 2-D input, got " + s.str());
  }
}

// C += A * B with A (m x k), B (k x n).
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T with A (m x k), B (n x k).
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// C += A^T * B with A (k x m), B (k x n).
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Value apply_binary(OpKind kind, Value a, Value b) {
  if (a.tape() != b.tape()) throw InvalidInput(std::string(to_string(kind)) + ": operands on different tapes");
  Tape& tape = *a.tape();
  const Tensor& x = a.data();
  const Tensor& y = b.data();
  Tape::Node n;
  n.kind = kind;
  n.a = a.id();
  n.b = b.id();

  if (kind == OpKind::matmul) {
    require_matrix(kind, x.shape);
    require_matrix(kind, y.shape);
    if (x.shape.cols != y.shape.rows) shape_error(kind, x.shape, y.shape);
    n.data = Tensor(Shape::matrix(x.shape.rows, y.shape.cols));
    gemm_acc(x.data.data(), y.data.data(), n.data.data.data(), x.shape.rows, x.shape.cols,
             y.shape.cols);
    return tape.push(std::move(n));
  }

  const bool same = x.shape == y.shape;
  const bool xs = is_scalar(x.shape);
  const bool ys = is_scalar(y.shape);
  if (!same && !xs && !ys) shape_error(kind, x.shape, y.shape);
  const Shape out = same ? x.shape : (xs ? y.shape : x.shape);
  n.data = Tensor(out);
  auto& o = n.data.data;
  const std::size_t len = out.size();
  for (std::size_t i = 0; i < len; ++i) {
    const double u = xs ? x.data[0] : x.data[i];
    const double v = ys ? y.data[0] : y.data[i];
    switch (kind) {
      case OpKind::add: o[i] = u + v; break;
      case OpKind::sub: o[i] = u - v; break;
      case OpKind::mul: o[i] = u * v; break;
      default: throw InvalidInput("apply_binary: not a binary kind");
    }
  }
  return tape.push(std::move(n));
}

Value apply_unary(OpKind kind, Value a, double factor) {
  Tape& tape = *a.tape();
  const Tensor& x = a.data();
  Tape::Node n;
  n.kind = kind;
  n.a = a.id();
  n.factor = factor;
  const std::size_t len = x.size();

  switch (kind) {
    case OpKind::exp:
    case OpKind::log:
    case OpKind::sigmoid:
    case OpKind::log_sigmoid:
    case OpKind::scale: {
      n.data = Tensor(x.shape);
      auto& o = n.data.data;
      for (std::size_t i = 0; i < len; ++i) {
        const double v = x.data[i];
        switch (kind) {
          case OpKind::exp: o[i] = std::exp(v); break;
          case OpKind::log: o[i] = std::log(v); break;
          case OpKind::sigmoid: o[i] = sigmoid_scalar(v); break;
          case OpKind::log_sigmoid: o[i] = log_sigmoid_scalar(v); break;
          default: o[i] = factor * v; break;
        }
      }
      break;
    }
    case OpKind::softmax_rows:
    case OpKind::log_softmax_rows: {
      require_matrix(kind, x.shape);
      n.data = Tensor(x.shape);
      const std::size_t rows = x.shape.rows;
      const std::size_t cols = x.shape.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.data.data() + r * cols;
        double* out = n.data.data.data() + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, in[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
        if (kind == OpKind::softmax_rows) {
          for (std::size_t c = 0; c < cols; ++c) out[c] = std::exp(in[c] - mx) / s;
        } else {
          const double lse = mx + std::log(s);
          for (std::size_t c = 0; c < cols; ++c) out[c] = in[c] - lse;
        }
      }
      break;
    }
    case OpKind::mean:
    case OpKind::sum: {
      double s = 0.0;
      for (double v : x.data) s += v;
      n.data = Tensor::scalar(kind == OpKind::mean ? s / static_cast<double>(len) : s);
      break;
    }
    case OpKind::transpose: {
      const Shape& s = x.shape;
      n.data = Tensor(Shape::matrix(s.cols, s.rows));
      for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c) n.data(c, r) = x(r, c);
      break;
    }
    default:
      throw InvalidInput("apply_unary: not a unary kind");
  }
  return tape.push(std::move(n));
}

Value add(Value a, Value b) { return apply_binary(OpKind::add, a, b); }
Value sub(Value a, Value b) { return apply_binary(OpKind::sub, a, b); }
Value mul(Value a, Value b) { return apply_binary(OpKind::mul, a, b); }
Value matmul(Value a, Value b) { return apply_binary(OpKind::matmul, a, b); }
Value exp(Value a) { return apply_unary(OpKind::exp, a, 0.0); }
Value log(Value a) { return apply_unary(OpKind::log, a, 0.0); }
Value sigmoid(Value a) { return apply_unary(OpKind::sigmoid, a, 0.0); }
Value log_sigmoid(Value a) { return apply_unary(OpKind::log_sigmoid, a, 0.0); }
Value softmax_rows(Value a) { return apply_unary(OpKind::softmax_rows, a, 0.0); }
Value log_softmax_rows(Value a) { return apply_unary(OpKind::log_softmax_rows, a, 0.0); }
Value mean(Value a) { return apply_unary(OpKind::mean, a, 0.0); }
Value sum(Value a) { return apply_unary(OpKind::sum, a, 0.0); }
Value scale(Value a, double factor) { return apply_unary(OpKind::scale, a, factor); }
Value transpose(Value a) { return apply_unary(OpKind::transpose, a, 0.0); }

Value gather_rows(Value table, std::span<const std::size_t> rows) {
  const Tensor& t = table.data();
  require_matrix(OpKind::gather_rows, t.shape);
  Tape::Node n;
  n.kind = OpKind::gather_rows;
  n.a = table.id();
  n.index.assign(rows.begin(), rows.end());
  const std::size_t cols = t.shape.cols;
  n.data = Tensor(Shape::matrix(rows.size(), cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= t.shape.rows) {
      throw InvalidInput("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                         t.shape.str());
    }
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * cols), cols,
                n.data.data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return table.tape()->push(std::move(n));
}

Value forward_op(OpKind kind, std::span<const Value> inputs, double factor,
                 std::span<const std::size_t> rows) {
  const auto need = [&](std::size_t k) {
    if (inputs.size() != k) {
      throw InvalidInput(std::string(to_string(kind)) + ": expects " + std::to_string(k) +
                         " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::matmul:
      need(2);
      return apply_binary(kind, inputs[0], inputs[1]);
    case OpKind::gather_rows:
      need(1);
      return gather_rows(inputs[0], rows);
    case OpKind::leaf:
      throw InvalidInput("forward_op: leaf is not an operation");
    default:
      need(1);
      return apply_unary(kind, inputs[0], factor);
  }
}

void Tape::propagate(const Node& n) {
  const Tensor& g = n.grad;
  switch (n.kind) {
    case OpKind::leaf:
      return;
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& x = nodes_[n.a].data;
      const Tensor& y = nodes_[n.b].data;
      const bool xs = is_scalar(x.shape) && !is_scalar(n.data.shape);
      const bool ys = is_scalar(y.shape) && !is_scalar(n.data.shape);
      const double sign_b = n.kind == OpKind::sub ? -1.0 : 1.0;
      Tensor& ga = grad_of(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = n.kind == OpKind::mul ? g.data[i] * (ys ? y.data[0] : y.data[i]) : g.data[i];
        ga.data[xs ? 0 : i] += d;
      }
      Tensor& gb = grad_of(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d =
            n.kind == OpKind::mul ? g.data[i] * (xs ? x.data[0] : x.data[i]) : sign_b * g.data[i];
        gb.data[ys ? 0 : i] += d;
      }
      return;
    }
    case OpKind::matmul: {
      const Tensor& x = nodes_[n.a].data;
      const Tensor& y = nodes_[n.b].data;
      const std::size_t m = x.shape.rows, k = x.shape.cols, cols = y.shape.cols;
      {
        Tensor ga(x.shape);
        gemm_nt_acc(g.data.data(), y.data.data(), ga.data.data(), m, cols, k);
        Tensor& dst = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) dst.data[i] += ga.data[i];
      }
      {
        Tensor gb(y.shape);
        gemm_tn_acc(nodes_[n.a].data.data.data(), g.data.data(), gb.data.data(), k, m, cols);
        Tensor& dst = grad_of(n.b);
        for (std::size_t i = 0; i < gb.size(); ++i) dst.data[i] += gb.data[i];
      }
      return;
    }
    default:
      break;
  }

  Tensor& ga = grad_of(n.a);
  const Tensor& x = nodes_[n.a].data;
  const Tensor& out = n.data;
  switch (n.kind) {
    case OpKind::exp:
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * out.data[i];
      break;
    case OpKind::log:
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / x.data[i];
      break;
    case OpKind::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i)
        ga.data[i] += g.data[i] * out.data[i] * (1.0 - out.data[i]);
      break;
    case OpKind::log_sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * sigmoid_scalar(-x.data[i]);
      break;
    case OpKind::scale:
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += n.factor * g.data[i];
      break;
    case OpKind::softmax_rows: {
      const std::size_t rows = out.shape.rows, cols = out.shape.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g(r, c) * out(r, c);
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) += out(r, c) * (g(r, c) - dot);
      }
      break;
    }
    case OpKind::log_softmax_rows: {
      const std::size_t rows = out.shape.rows, cols = out.shape.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gs += g(r, c);
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) - std::exp(out(r, c)) * gs;
      }
      break;
    }
    case OpKind::gather_rows: {
      const std::size_t cols = out.shape.cols;
      for (std::size_t r = 0; r < n.index.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) ga(n.index[r], c) += g(r, c);
      break;
    }
    case OpKind::mean: {
      const double d = g.data[0] / static_cast<double>(x.size());
      for (double& v : ga.data) v += d;
      break;
    }
    case OpKind::sum:
      for (double& v : ga.data) v += g.data[0];
      break;
    case OpKind::transpose:
      for (std::size_t r = 0; r < out.shape.rows; ++r)
        for (std::size_t c = 0; c < out.shape.cols; ++c) ga(c, r) += g(r, c);
      break;
    default:
      break;
  }
}

void Tape::backward(Value root) {
  if (root.tape() != this) throw InvalidInput("backward: root belongs to another tape");
  const Shape& s = root.shape();
  if (s.size() != 1) throw InvalidInput("backward: root must be scalar, got shape " + s.str());
  for (auto& n : nodes_) {
    n.has_grad = false;
  }
  grad_of(root.id()).data[0] = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    if (!nodes_[id].has_grad) continue;
    // propagate() may allocate grads of earlier nodes, never of this one.
    propagate(nodes_[id]);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || !n.has_grad) continue;
    if (n.param->grad.shape != n.param->value.shape) n.param->grad = Tensor(n.param->value.shape);
    auto& dst = n.param->grad.data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad.data[i];
  }
}

std::vector<GradCheckReport> grad_check_each(const MultiScalarFn& f, std::span<Parameter* const> params,
                                             double eps, double rtol) {
  if (!(eps > 0.0)) throw InvalidInput("grad_check: eps must be positive");
  std::size_t outputs = 0;
  {
    Tape tape;
    outputs = f(tape).size();
  }
  // analytic[o][p] holds the gradient of output o for parameter p
  std::vector<std::vector<std::vector<double>>> analytic(outputs);
  for (std::size_t o = 0; o < outputs; ++o) {
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    const std::vector<Value> roots = f(tape);
    tape.backward(roots.at(o));
    for (Parameter* p : params) analytic[o].push_back(p->grad.data);
  }
  const auto eval = [&f] {
    Tape tape;
    std::vector<double> out;
    for (const Value& v : f(tape)) out.push_back(v.item());
    return out;
  };

  std::vector<GradCheckReport> reports(outputs);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    std::vector<ParamCheck> pcs(outputs);
    for (auto& pc : pcs) {
      pc.name = p->name;
      pc.size = p->value.size();
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + eps;
      const std::vector<double> up = eval();
      p->value.data[i] = orig - eps;
      const std::vector<double> down = eval();
      p->value.data[i] = orig;

      for (std::size_t o = 0; o < outputs; ++o) {
        ParamCheck& pc = pcs[o];
        const double numeric = (up[o] - down[o]) / (2.0 * eps);
        const double an = analytic[o][pi][i];
        double err = 0.0;
        if (!std::isfinite(numeric) || !std::isfinite(an)) {
          pc.finite = false;
          err = std::numeric_limits<double>::infinity();
        } else {
          const double denom = std::max({std::abs(an), std::abs(numeric), kGradCheckFloor});
          err = std::abs(an - numeric) / denom;
        }
        if (err > pc.max_rel_error || i == 0) {
          pc.max_rel_error = err;
          pc.worst_index = i;
          pc.analytic_at_worst = an;
          pc.numeric_at_worst = numeric;
        }
        ++reports[o].checked;
      }
    }
    for (std::size_t o = 0; o < outputs; ++o) {
      ParamCheck& pc = pcs[o];
      GradCheckReport& r = reports[o];
      pc.passed = pc.finite && pc.max_rel_error <= rtol;
      r.passed = r.passed && pc.passed;
      r.max_rel_error = std::max(r.max_rel_error, pc.max_rel_error);
      r.params.push_back(std::move(pc));
    }
  }
  // leave the accumulated gradient of the first output, as a single check would
  for (std::size_t pi = 0; pi < params.size() && outputs > 0; ++pi) params[pi]->grad.data = analytic[0][pi];
  return reports;
}

GradCheckReport grad_check(const ScalarFn& f, std::span<Parameter* const> params, double eps,
                           double rtol) {
  return grad_check_each([&f](Tape& t) { return std::vector<Value>{f(t)}; }, params, eps, rtol).at(0);
}

}  // namespace leanpo
