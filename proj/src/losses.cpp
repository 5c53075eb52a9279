#include "leanpo/losses.hpp"

namespace leanpo {

namespace {

void require_pairs(const PairBatch& batch, const char* what) {
  if (batch.pairs.empty()) throw InvalidInput(std::string(what) + ": empty batch");
  for (const auto& p : batch.pairs) {
    if (p.len_win == 0 || p.len_lose == 0) {
      throw InvalidInput(std::string(what) + ": winning and losing responses must be non-empty");
    }
  }
}

Tape& tape_of(const PairBatch& batch) { return *batch.pairs.front().logp_win.tape(); }

Value mean_of(std::vector<Value>& terms) {
  Value acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

double avg_reward(double logp_sum, std::size_t length, double beta) {
  return logp_sum * (beta / static_cast<double>(length));
}

}  // namespace

Value bt_probability(Value r_w, Value r_l, double gamma) {
  return sigmoid(sub(sub(r_w, r_l), r_w.tape()->constant(gamma)));
}

int pseudo_label(double r_w, double r_l, double d, SmoothingMode mode) {
  const double margin = r_w - r_l;
  switch (mode) {
    case SmoothingMode::paper: return margin > d ? 1 : 0;
    case SmoothingMode::inverted: return margin > d ? 0 : 1;
    case SmoothingMode::off: return 0;
  }
  return 0;
}

Value smoothed_probability(Value p, int z, double alpha) {
  Tape& t = *p.tape();
  return smoothed_probability(p, sub(t.constant(1.0), p), z, alpha);
}

Value smoothed_probability(Value p, Value p_reverse, int z, double alpha) {
  if (z == 0 || alpha == 0.0) return p;
  const double a = static_cast<double>(z) * alpha;
  return add(scale(p, 1.0 - a), scale(p_reverse, a));
}

Value avg_reward_node(Value logp_sum, std::size_t length, double beta) {
  return scale(logp_sum, beta / static_cast<double>(length));
}

std::vector<int> leanpo_gates(const PairBatch& batch, const RewardConfig& cfg) {
  std::vector<int> z;
  z.reserve(batch.pairs.size());
  for (const auto& p : batch.pairs) {
    double rw = 0.0, rl = 0.0;
    if (cfg.zq_source == ZqSource::frozen_reference) {
      if (!p.ref_logp_win || !p.ref_logp_lose) {
        throw InvalidInput("leanpo_loss: zq-source frozen-reference needs reference logprobs");
      }
      rw = avg_reward(*p.ref_logp_win, p.len_win, cfg.beta);
      rl = avg_reward(*p.ref_logp_lose, p.len_lose, cfg.beta);
    } else {
      rw = avg_reward(p.logp_win.item(), p.len_win, cfg.beta);
      rl = avg_reward(p.logp_lose.item(), p.len_lose, cfg.beta);
    }
    z.push_back(pseudo_label(rw, rl, cfg.d, cfg.smoothing));
  }
  return z;
}

Value leanpo_loss(const PairBatch& batch, const RewardConfig& cfg) {
  require_pairs(batch, "leanpo_loss");
  cfg.validate();
  Tape& t = tape_of(batch);
  const auto gates = leanpo_gates(batch, cfg);
  std::vector<Value> terms;
  terms.reserve(batch.pairs.size());
  for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
    const auto& pr = batch.pairs[i];
    Value rw = avg_reward_node(pr.logp_win, pr.len_win, cfg.beta);
    Value rl = avg_reward_node(pr.logp_lose, pr.len_lose, cfg.beta);
    const bool smoothed = gates[i] == 1 && cfg.alpha != 0.0;
    if (!smoothed && cfg.variant == LossVariant::log_sigmoid) {
      terms.push_back(log_sigmoid(sub(sub(rw, rl), t.constant(cfg.gamma))));
      continue;
    }
    Value p = bt_probability(rw, rl, cfg.gamma);
    Value pt = p;
    if (smoothed) {
      Value reverse = cfg.reverse == ReverseProbability::margin ? bt_probability(rl, rw, cfg.gamma)
                                                                 : sub(t.constant(1.0), p);
      pt = smoothed_probability(p, reverse, gates[i], cfg.alpha);
    }
    terms.push_back(cfg.variant == LossVariant::log_sigmoid ? log(pt) : pt);
  }
  return scale(mean_of(terms), -1.0);
}

Value dpo_loss(const PairBatch& batch, const RewardConfig& cfg) {
  require_pairs(batch, "dpo_loss");
  cfg.validate();
  Tape& t = tape_of(batch);
  std::vector<Value> terms;
  terms.reserve(batch.pairs.size());
  for (const auto& pr : batch.pairs) {
    if (!pr.ref_logp_win || !pr.ref_logp_lose) throw InvalidInput("dpo_loss: batch lacks reference logprobs");
    Value rw = scale(sub(pr.logp_win, t.constant(*pr.ref_logp_win)), cfg.beta);
    Value rl = scale(sub(pr.logp_lose, t.constant(*pr.ref_logp_lose)), cfg.beta);
    terms.push_back(log_sigmoid(sub(rw, rl)));
  }
  return scale(mean_of(terms), -1.0);
}

Value simpo_loss(const PairBatch& batch, const RewardConfig& cfg) {
  require_pairs(batch, "simpo_loss");
  cfg.validate();
  Tape& t = tape_of(batch);
  std::vector<Value> terms;
  terms.reserve(batch.pairs.size());
  for (const auto& pr : batch.pairs) {
    Value rw = avg_reward_node(pr.logp_win, pr.len_win, cfg.beta);
    Value rl = avg_reward_node(pr.logp_lose, pr.len_lose, cfg.beta);
    terms.push_back(log_sigmoid(sub(sub(rw, rl), t.constant(cfg.gamma))));
  }
  return scale(mean_of(terms), -1.0);
}

Value sft_nll_loss(PolicyGraph& model, const std::vector<TokenSeq>& contexts,
                   const std::vector<TokenSeq>& targets) {
  if (contexts.size() != targets.size()) {
    throw InvalidInput("sft_nll_loss: " + std::to_string(contexts.size()) + " contexts vs " +
                       std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw InvalidInput("sft_nll_loss: empty batch");
  std::vector<Value> sums;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sums.push_back(model.sequence_logprob(contexts[i], targets[i]));
    tokens += targets[i].size();
  }
  Value acc = sums.front();
  for (std::size_t i = 1; i < sums.size(); ++i) acc = add(acc, sums[i]);
  return scale(acc, -1.0 / static_cast<double>(tokens));
}

}  // namespace leanpo
