#include "leanpo/sft_analog.hpp"

#include <cmath>

#include "leanpo/error.hpp"
#include "leanpo/losses.hpp"
#include "leanpo/optim.hpp"
#include "leanpo/rng.hpp"

namespace leanpo {

void PretrainConfig::validate() const {
  if (batch_size < 1) throw InvalidInput("pretrain: batch-size must be >= 1");
  if (!(lr > 0.0)) throw InvalidInput("pretrain: lr must be positive");
  if (hint_fraction < 0.0 || reflection_fraction < 0.0 || hint_fraction + reflection_fraction > 1.0)
    throw InvalidInput("pretrain: prompt shares must be non-negative and sum to at most 1");
  if (draft_corruption < 0.0 || draft_corruption > 1.0)
    throw InvalidInput("pretrain: draft-corruption must be in [0, 1]");
  if (summary_noise < 0.0 || summary_noise > 1.0)
    throw InvalidInput("pretrain: summary-noise must be in [0, 1]");
  if (dropped_fraction < 0.0 || dropped_fraction > 1.0)
    throw InvalidInput("pretrain: dropped-fraction must be in [0, 1]");
  if (!(max_drop > 0.0 && max_drop <= 1.0)) throw InvalidInput("pretrain: max-drop must be in (0, 1]");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0))
    throw InvalidInput("pretrain: grad-clip-norm must be positive");
}

SftExample sft_example(const WorldSpec& spec, const Vocab& vocab, const PretrainConfig& cfg,
                       std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  const WorldInstance w = gen_world(spec, derive_seed(seed, 0));
  SftExample ex;
  ex.target = teacher_response(spec, w.events, w.query_index);
  for (std::size_t i = 3; i < ex.target.size(); ++i)
    if (rng.bernoulli(cfg.summary_noise)) ex.target[i] = spec.event_tokens[rng.below(spec.event_tokens.size())];
  const double u = rng.uniform();
  if (u < cfg.hint_fraction) {
    ex.context = hint_context(vocab, w.answer, w.video, w.query);
  } else if (u < cfg.hint_fraction + cfg.reflection_fraction) {
    TokenSeq draft = ex.target;
    for (Token& t : draft)
      if (rng.bernoulli(cfg.draft_corruption)) t = spec.event_tokens[rng.below(spec.event_tokens.size())];
    ex.context = reflection_context(vocab, w.answer, draft, w.video, w.query);
  } else if (rng.bernoulli(cfg.dropped_fraction)) {
    const AugmentationOp drop{AugKind::frame_drop, cfg.max_drop * (1.0 - rng.uniform()), spec.event_tokens};
    ex.context = plain_context(vocab, apply_augmentation(w.video, drop, derive_seed(seed, 2)), w.query);
  } else {
    ex.context = plain_context(vocab, w.video, w.query);
  }
  ex.target.push_back(vocab.eos);
  return ex;
}

PolicyModel fit_sft_analog(const WorldSpec& spec, const Vocab& vocab, const AttentionConfig& attn,
                           const PretrainConfig& cfg, const PretrainProgress& progress) {
  cfg.validate();
  spec.validate(vocab);
  PolicyModel model = PolicyModel::attention(vocab, attn, derive_seed(cfg.seed, 0));
  const auto params = model.parameters();
  Optimizer opt({OptimizerKind::adam, cfg.lr});
  std::size_t next = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<TokenSeq> contexts, targets;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      SftExample ex = sft_example(spec, vocab, cfg, derive_seed(derive_seed(cfg.seed, 1), next++));
      contexts.push_back(std::move(ex.context));
      targets.push_back(std::move(ex.target));
    }
    model.zero_grad();
    Tape tape;
    PolicyGraph graph(tape, model);
    const Value loss = sft_nll_loss(graph, contexts, targets);
    const double lv = loss.item();
    if (!std::isfinite(lv)) throw NumericAbort("pretrain: non-finite loss at step " + std::to_string(step));
    tape.backward(loss);
    clip_grad_norm(params, cfg.grad_clip_norm);
    opt.step(params);
    if (progress) progress(step, lv);
  }
  return model;
}

}  // namespace leanpo
