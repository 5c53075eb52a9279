#pragma once

// Differentiable preference objectives over sequence log-likelihood nodes.

#include <optional>
#include <vector>

#include "leanpo/grad.hpp"
#include "leanpo/policy.hpp"
#include "leanpo/rewards.hpp"

namespace leanpo {

struct PairTerms {
  Value logp_win;   // scalar node, sum of token logprobs of y_w under the policy
  Value logp_lose;
  std::size_t len_win = 0;
  std::size_t len_lose = 0;
  std::optional<double> ref_logp_win;  // same sums under the frozen reference
  std::optional<double> ref_logp_lose;
};

struct PairBatch {
  std::vector<PairTerms> pairs;
};

// sigma(r_w - r_l - gamma).
Value bt_probability(Value r_w, Value r_l, double gamma);

// Hard gate on detached rewards; see SmoothingMode.
int pseudo_label(double r_w, double r_l, double d, SmoothingMode mode);

// (1 - z*alpha) * p + z*alpha * (1 - p).
Value smoothed_probability(Value p, int z, double alpha);
// (1 - z*alpha) * p + z*alpha * p_reverse.
Value smoothed_probability(Value p, Value p_reverse, int z, double alpha);

// beta / |y| * logp, as a node.
Value avg_reward_node(Value logp_sum, std::size_t length, double beta);

// Per-pair gates leanpo_loss applies for this batch.
std::vector<int> leanpo_gates(const PairBatch& batch, const RewardConfig& cfg);

// -mean(p~) (linear-expectation) or -mean(log p~) (log-sigmoid).
Value leanpo_loss(const PairBatch& batch, const RewardConfig& cfg);
// mean of -log sigma(r_dpo(y_w) - r_dpo(y_l)); needs reference sums.
Value dpo_loss(const PairBatch& batch, const RewardConfig& cfg);
// mean of -log sigma(r_avg(y_w) - r_avg(y_l) - gamma).
Value simpo_loss(const PairBatch& batch, const RewardConfig& cfg);
// Mean over all target tokens of -log p(token | context, prefix).
Value sft_nll_loss(PolicyGraph& model, const std::vector<TokenSeq>& contexts,
                   const std::vector<TokenSeq>& targets);

}  // namespace leanpo
