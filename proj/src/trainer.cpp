#include "leanpo/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "leanpo/checkpoint.hpp"
#include "leanpo/digest.hpp"
#include "leanpo/error.hpp"
#include "leanpo/rng.hpp"

namespace leanpo {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::leanpo: return "leanpo";
    case Objective::dpo: return "dpo";
    case Objective::simpo: return "simpo";
    case Objective::sft: return "sft";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  if (s == "leanpo") return Objective::leanpo;
  if (s == "dpo") return Objective::dpo;
  if (s == "simpo") return Objective::simpo;
  if (s == "sft") return Objective::sft;
  throw InvalidInput("unknown objective '" + s + "' (valid: leanpo, dpo, simpo, sft)");
}

std::string to_string(SftTarget t) { return t == SftTarget::answer ? "answer" : "winning"; }

SftTarget parse_sft_target(const std::string& s) {
  if (s == "answer") return SftTarget::answer;
  if (s == "winning") return SftTarget::winning;
  throw InvalidInput("unknown sft target '" + s + "' (valid: answer, winning)");
}

void TrainConfig::validate() const {
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) throw InvalidInput("train: lr must be >= 0");
  if (batch_size < 1) throw InvalidInput("train: batch-size must be >= 1");
  if (epochs < 1) throw InvalidInput("train: epochs must be >= 1");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw InvalidInput("train: grad-clip-norm must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw InvalidInput("train: adam betas must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw InvalidInput("train: adam eps must be positive");
}

namespace {

Value leanpo_objective(const ObjectiveInputs& in) { return leanpo_loss(in.batch, in.reward); }
Value dpo_objective(const ObjectiveInputs& in) { return dpo_loss(in.batch, in.reward); }
Value simpo_objective(const ObjectiveInputs& in) { return simpo_loss(in.batch, in.reward); }
Value sft_objective(const ObjectiveInputs& in) {
  return sft_nll_loss(in.graph, in.contexts, in.sft_targets);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ObjectiveLoss objective_loss(Objective o) {
  switch (o) {
    case Objective::leanpo: return leanpo_objective;
    case Objective::dpo: return dpo_objective;
    case Objective::simpo: return simpo_objective;
    case Objective::sft: return sft_objective;
  }
  throw InvalidInput("unknown objective");
}

std::vector<std::size_t> shuffle_epoch(std::size_t n, std::size_t epoch, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(perm);
  return perm;
}

std::string config_digest(const TrainConfig& cfg, const RewardConfig& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "objective=%s;optimizer=%s;lr=%.17g;b1=%.17g;b2=%.17g;eps=%.17g;batch=%zu;epochs=%zu;"
                "clip=%.17g;seed=%llu;sft_target=%s;beta=%.17g;gamma=%.17g;alpha=%.17g;d=%.17g;"
                "variant=%s;smoothing=%s;zq=%s;reverse=%s",
                to_string(cfg.objective).c_str(), to_string(cfg.optimizer.kind).c_str(), cfg.optimizer.lr,
                cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps, cfg.batch_size, cfg.epochs,
                cfg.grad_clip_norm.value_or(-1.0), static_cast<unsigned long long>(cfg.seed),
                to_string(cfg.sft_target).c_str(), r.beta, r.gamma, r.alpha, r.d, to_string(r.variant).c_str(),
                to_string(r.smoothing).c_str(), to_string(r.zq_source).c_str(), to_string(r.reverse).c_str());
  return digest_hex(buf);
}

RunRecord train(PolicyModel& model, const std::vector<PreferencePair>& data, const TrainConfig& cfg,
                const RewardConfig& reward, const StepCallback& on_step) {
  if (data.empty()) throw InvalidInput("train: empty dataset");
  cfg.validate();
  reward.validate();
  const Vocab& vocab = model.vocab();
  for (const auto& p : data) {
    if (!pair_is_valid(vocab, p)) throw InvalidInput("train: invalid record " + p.id);
  }

  // The reference never changes, so its sequence sums are computed once.
  const FrozenReference reference = freeze_reference(model);
  std::vector<TokenSeq> contexts(data.size());
  std::vector<double> ref_win(data.size()), ref_lose(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    contexts[i] = plain_context(vocab, data[i].video, data[i].query);
    ref_win[i] = sequence_logprob(reference.model(), contexts[i], data[i].winning);
    ref_lose[i] = sequence_logprob(reference.model(), contexts[i], data[i].losing);
  }

  const ObjectiveLoss loss_fn = objective_loss(cfg.objective);
  const auto params = model.parameters();
  Optimizer opt(cfg.optimizer);
  RunRecord run;
  run.config_digest = config_digest(cfg, reward);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffle_epoch(data.size(), epoch, cfg.seed);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) run.snapshots.emplace_back(step, model);

      model.zero_grad();
      Tape tape;
      PolicyGraph graph(tape, model);
      PairBatch batch;
      std::vector<TokenSeq> batch_contexts, sft_targets;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        const PreferencePair& p = data[i];
        PairTerms t{graph.sequence_logprob(contexts[i], p.winning),
                    graph.sequence_logprob(contexts[i], p.losing),
                    p.winning.size(),
                    p.losing.size(),
                    ref_win[i],
                    ref_lose[i]};
        batch.pairs.push_back(t);
        batch_contexts.push_back(contexts[i]);
        sft_targets.push_back(cfg.sft_target == SftTarget::answer ? p.answer : p.winning);
      }
      const Value loss = loss_fn({graph, batch, reward, batch_contexts, sft_targets});

      MetricsRow row;
      row.step = step;
      row.loss = loss.item();
      std::vector<double> lw, ll, rw, rl, dw, dl;
      for (std::size_t j = 0; j < batch.pairs.size(); ++j) {
        const PairTerms& t = batch.pairs[j];
        const double a = t.logp_win.item(), b = t.logp_lose.item();
        lw.push_back(a);
        ll.push_back(b);
        rw.push_back(reward.beta * a / static_cast<double>(t.len_win));
        rl.push_back(reward.beta * b / static_cast<double>(t.len_lose));
        dw.push_back(reward.beta * (a - *t.ref_logp_win));
        dl.push_back(reward.beta * (b - *t.ref_logp_lose));
      }
      const auto gates = leanpo_gates(batch, reward);
      row.mean_logp_win = mean(lw);
      row.mean_logp_lose = mean(ll);
      row.leanpo_reward_win = mean(rw);
      row.leanpo_reward_lose = mean(rl);
      row.dpo_reward_win = mean(dw);
      row.dpo_reward_lose = mean(dl);
      row.margin = row.leanpo_reward_win - row.leanpo_reward_lose;
      row.zq_rate = static_cast<double>(std::count(gates.begin(), gates.end(), 1)) /
                    static_cast<double>(gates.size());

      if (!std::isfinite(row.loss)) {
        std::string ids;
        for (std::size_t j = start; j < end; ++j) ids += (ids.empty() ? "" : ",") + data[order[j]].id;
        throw NumericAbort("non-finite loss at step " + std::to_string(step) + " (batch: " + ids + ")");
      }
      tape.backward(loss);
      run.applied_grad_norms.push_back(clip_grad_norm(params, cfg.grad_clip_norm));
      opt.step(params);
      run.rows.push_back(row);
      if (on_step) on_step(row);
    }
  }
  run.final_checkpoint_digest = model_digest(model);
  return run;
}

}  // namespace leanpo
