#pragma once

#include <span>
#include <string>

namespace leanpo {

enum class LossVariant { linear_expectation, log_sigmoid };
// paper: z = 1 iff margin > d. inverted: z = 1 iff margin <= d. off: z = 0.
enum class SmoothingMode { paper, inverted, off };
enum class ZqSource { current_policy, frozen_reference };
// How p(y_l > y_w) is formed inside the smoothed probability:
// margin = sigma(r_l - r_w - gamma), complement = 1 - p(y_w > y_l).
enum class ReverseProbability { margin, complement };

struct RewardConfig {
  double beta = 2.0;
  double gamma = 0.3;
  double alpha = 0.1;
  double d = 0.0;
  LossVariant variant = LossVariant::linear_expectation;
  SmoothingMode smoothing = SmoothingMode::paper;
  ZqSource zq_source = ZqSource::current_policy;
  ReverseProbability reverse = ReverseProbability::margin;

  // beta > 0, gamma >= 0, 0 <= alpha < 0.5, all finite.
  void validate() const;
};

std::string to_string(LossVariant v);
std::string to_string(SmoothingMode m);
std::string to_string(ZqSource s);
std::string to_string(ReverseProbability r);
LossVariant parse_loss_variant(const std::string& s);
SmoothingMode parse_smoothing_mode(const std::string& s);
ZqSource parse_zq_source(const std::string& s);
ReverseProbability parse_reverse_probability(const std::string& s);

// beta * mean(logprobs). Requires a non-empty list of finite entries <= 0.
double avg_loglik_reward(std::span<const double> logprobs, double beta);

// beta * (sum(policy) - sum(reference)).
double dpo_implicit_reward(std::span<const double> policy_logprobs,
                           std::span<const double> reference_logprobs, double beta);

}  // namespace leanpo
