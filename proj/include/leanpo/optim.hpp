#pragma once

#include <optional>
#include <string>
#include <vector>

#include "leanpo/grad.hpp"

namespace leanpo {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Applies one update from the current Parameter::grad values.
  void step(const std::vector<Parameter*>& params);

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long long t_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

// Rescales gradients so their global norm is at most max_norm. Returns the
// norm after clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, std::optional<double> max_norm);

}  // namespace leanpo
