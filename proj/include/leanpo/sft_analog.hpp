#pragma once

// Supervised warm-up that turns a freshly initialized attention policy into
// the reference ("SFT") model for the synthetic world.

#include <cstdint>
#include <functional>
#include <optional>

#include "leanpo/policy.hpp"
#include "leanpo/synth.hpp"

namespace leanpo {

struct PretrainConfig {
  std::size_t steps = 1500;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  // Shares of hinted and reflection-style prompts; the rest are plain.
  double hint_fraction = 0.25;
  double reflection_fraction = 0.25;
  // Per-token corruption applied to the draft shown in reflection prompts.
  double draft_corruption = 0.3;
  // Chance that each summary token of a teacher response is replaced by a
  // random event, i.e. label noise in the supervised corpus.
  double summary_noise = 0.1;
  // Share of plain prompts whose video went through frame-drop at a strength
  // drawn uniformly from (0, max_drop]. The target still describes the
  // original video.
  double dropped_fraction = 0.3;
  double max_drop = 0.4;
  std::optional<double> grad_clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SftExample {
  TokenSeq context;
  TokenSeq target;  // teacher response followed by EOS
};

SftExample sft_example(const WorldSpec& spec, const Vocab& vocab, const PretrainConfig& cfg,
                       std::uint64_t seed);

using PretrainProgress = std::function<void(std::size_t step, double loss)>;

PolicyModel fit_sft_analog(const WorldSpec& spec, const Vocab& vocab, const AttentionConfig& attn,
                           const PretrainConfig& cfg, const PretrainProgress& progress = {});

}  // namespace leanpo
