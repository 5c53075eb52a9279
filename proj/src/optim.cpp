#include "leanpo/optim.hpp"

#include <cmath>

namespace leanpo {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw InvalidInput("unknown optimizer '" + s + "' (valid: adam, sgd)");
}

void Optimizer::step(const std::vector<Parameter*>& params) {
  if (cfg_.kind == OptimizerKind::sgd) {
    for (Parameter* p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data[i] -= cfg_.lr * p->grad.data[i];
    return;
  }
  if (m_.empty()) {
    for (Parameter* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& val = params[k]->value.data;
    const auto& g = params[k]->grad.data;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      val[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Parameter*>& params, std::optional<double> max_norm) {
  const double norm = global_grad_norm(params);
  if (!max_norm || norm <= *max_norm) return norm;
  const double f = *max_norm / norm;
  for (Parameter* p : params)
    for (double& g : p->grad.data) g *= f;
  return global_grad_norm(params);
}

}  // namespace leanpo
