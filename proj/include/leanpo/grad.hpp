#pragma once

// Reverse-mode automatic differentiation over small dense 64-bit arrays.
//
// A Tape records every operation in creation order. Values are lightweight
// handles (tape pointer + node id). Parameters live outside any tape; a tape
// binds them as leaves and backward() accumulates into Parameter::grad.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "leanpo/error.hpp"

namespace leanpo {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;
  int rank = 0;  // 0 scalar, 1 row vector, 2 matrix

  static Shape scalar() { return {1, 1, 0}; }
  static Shape vector(std::size_t n) { return {1, n, 1}; }
  static Shape matrix(std::size_t r, std::size_t c) { return {r, c, 2}; }

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), v); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * shape.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * shape.cols + c]; }
  double item() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad();
};

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  matmul,
  exp,
  log,
  sigmoid,
  log_sigmoid,
  softmax_rows,
  log_softmax_rows,
  gather_rows,
  mean,
  sum,
  scale,
  transpose,
};

std::string_view to_string(OpKind kind);

class Tape;

class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& data() const;
  // nullptr until backward() reaches this node.
  const Tensor* grad() const;
  const Shape& shape() const { return data().shape; }
  double item() const { return data().item(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// The computation record. Single-threaded; independent tapes share nothing.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Tensor t);
  Value constant(double v) { return constant(Tensor::scalar(v)); }
  Value parameter(Parameter& p);

  // Seeds d(root)/d(root) = 1 and propagates in reverse creation order.
  // Gradients of parameter leaves are added into Parameter::grad.
  void backward(Value root);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(int id) const { return nodes_.at(id).kind; }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    int a = -1;
    int b = -1;
    Tensor data;
    Tensor grad;
    bool has_grad = false;
    double factor = 0.0;
    std::vector<std::size_t> index;
    Parameter* param = nullptr;
  };

  Value push(Node node);
  Tensor& grad_of(int id);
  void propagate(const Node& n);

  std::vector<Node> nodes_;

  friend class Value;
  friend Value apply_binary(OpKind, Value, Value);
  friend Value apply_unary(OpKind, Value, double);
  friend Value gather_rows(Value, std::span<const std::size_t>);
};

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value matmul(Value a, Value b);
Value exp(Value a);
Value log(Value a);
Value sigmoid(Value a);
Value log_sigmoid(Value a);
Value softmax_rows(Value a);
Value log_softmax_rows(Value a);
Value gather_rows(Value table, std::span<const std::size_t> rows);
Value mean(Value a);
Value sum(Value a);
Value scale(Value a, double factor);
Value transpose(Value a);

// Generic dispatcher used by kind-parameterized tests. `factor` is the scale
// multiplier, `rows` the gather indices; both ignored by other kinds.
Value forward_op(OpKind kind, std::span<const Value> inputs, double factor = 1.0,
                 std::span<const std::size_t> rows = {});

struct ParamCheck {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool finite = true;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

using ScalarFn = std::function<Value(Tape&)>;

// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckReport grad_check(const ScalarFn& f, std::span<Parameter* const> params, double eps,
                           double rtol);

// Several scalars from one graph, one report each. Every perturbation costs a
// single evaluation shared by all outputs.
using MultiScalarFn = std::function<std::vector<Value>(Tape&)>;
std::vector<GradCheckReport> grad_check_each(const MultiScalarFn& f, std::span<Parameter* const> params,
                                             double eps, double rtol);

}  // namespace leanpo
