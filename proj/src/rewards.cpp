#include "leanpo/rewards.hpp"

#include <cmath>

#include "leanpo/error.hpp"

namespace leanpo {

void RewardConfig::validate() const {
  if (!std::isfinite(beta) || !(beta > 0.0)) throw InvalidInput("reward config: beta must be > 0");
  if (!std::isfinite(gamma) || gamma < 0.0) throw InvalidInput("reward config: gamma must be >= 0");
  if (!std::isfinite(alpha) || alpha < 0.0 || alpha >= 0.5) {
    throw InvalidInput("reward config: alpha must lie in [0, 0.5)");
  }
  if (!std::isfinite(d)) throw InvalidInput("reward config: d must be finite");
}

std::string to_string(LossVariant v) {
  return v == LossVariant::linear_expectation ? "linear-expectation" : "log-sigmoid";
}

std::string to_string(SmoothingMode m) {
  switch (m) {
    case SmoothingMode::paper: return "paper";
    case SmoothingMode::inverted: return "inverted";
    case SmoothingMode::off: return "off";
  }
  return "?";
}

std::string to_string(ZqSource s) {
  return s == ZqSource::current_policy ? "current-policy" : "frozen-reference";
}

std::string to_string(ReverseProbability r) {
  return r == ReverseProbability::margin ? "margin" : "complement";
}

LossVariant parse_loss_variant(const std::string& s) {
  if (s == "linear-expectation") return LossVariant::linear_expectation;
  if (s == "log-sigmoid") return LossVariant::log_sigmoid;
  throw InvalidInput("unknown loss-variant '" + s + "' (valid: linear-expectation, log-sigmoid)");
}

SmoothingMode parse_smoothing_mode(const std::string& s) {
  if (s == "paper") return SmoothingMode::paper;
  if (s == "inverted") return SmoothingMode::inverted;
  if (s == "off") return SmoothingMode::off;
  throw InvalidInput("unknown smoothing-mode '" + s + "' (valid: paper, inverted, off)");
}

ZqSource parse_zq_source(const std::string& s) {
  if (s == "current-policy") return ZqSource::current_policy;
  if (s == "frozen-reference") return ZqSource::frozen_reference;
  throw InvalidInput("unknown zq-source '" + s + "' (valid: current-policy, frozen-reference)");
}

ReverseProbability parse_reverse_probability(const std::string& s) {
  if (s == "margin") return ReverseProbability::margin;
  if (s == "complement") return ReverseProbability::complement;
  throw InvalidInput("unknown reverse-probability '" + s + "' (valid: margin, complement)");
}

double avg_loglik_reward(std::span<const double> logprobs, double beta) {
  if (logprobs.empty()) throw InvalidInput("avg_loglik_reward: empty logprob list");
  double s = 0.0;
  for (double v : logprobs) {
    if (!std::isfinite(v)) throw InvalidInput("avg_loglik_reward: non-finite logprob");
    if (v > 0.0) throw InvalidInput("avg_loglik_reward: logprob above zero");
    s += v;
  }
  return beta * s / static_cast<double>(logprobs.size());
}

double dpo_implicit_reward(std::span<const double> policy_logprobs,
                           std::span<const double> reference_logprobs, double beta) {
  if (policy_logprobs.size() != reference_logprobs.size()) {
    throw InvalidInput("dpo_implicit_reward: length mismatch " + std::to_string(policy_logprobs.size()) +
                       " vs " + std::to_string(reference_logprobs.size()));
  }
  if (policy_logprobs.empty()) throw InvalidInput("dpo_implicit_reward: empty logprob lists");
  double sp = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < policy_logprobs.size(); ++i) {
    if (!std::isfinite(policy_logprobs[i]) || !std::isfinite(reference_logprobs[i])) {
      throw InvalidInput("dpo_implicit_reward: non-finite logprob");
    }
    sp += policy_logprobs[i];
    sr += reference_logprobs[i];
  }
  return beta * (sp - sr);
}

}  // namespace leanpo
