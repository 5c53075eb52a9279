#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "leanpo/policy.hpp"

namespace leanpo {

// Batch means recorded at one optimizer step, before the update.
struct MetricsRow {
  std::size_t step = 0;
  double mean_logp_win = 0.0;
  double mean_logp_lose = 0.0;
  double leanpo_reward_win = 0.0;
  double leanpo_reward_lose = 0.0;
  double dpo_reward_win = 0.0;
  double dpo_reward_lose = 0.0;
  double margin = 0.0;
  double zq_rate = 0.0;
  double loss = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct RunRecord {
  std::string config_digest;
  std::vector<MetricsRow> rows;
  std::string final_checkpoint_digest;
  // Global gradient norm actually applied at each step (after clipping).
  std::vector<double> applied_grad_norms;
  // Model state before the update of the given step.
  std::vector<std::pair<std::size_t, PolicyModel>> snapshots;
};

}  // namespace leanpo
