#pragma once

// Lab configuration: one INI-style text file.
//
//   # comment
//   [section]
//   key = value
//
// Sections: world, model, pretrain, pipeline, reward, reward.<objective>,
// train, diagnose, compare. A reward.<objective> section overrides reward
// keys for runs of that objective only. Unknown sections or keys, repeated
// keys and malformed values are rejected with the offending line number.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "leanpo/error.hpp"
#include "leanpo/policy.hpp"
#include "leanpo/rewards.hpp"
#include "leanpo/sft_analog.hpp"
#include "leanpo/synth.hpp"
#include "leanpo/trainer.hpp"

namespace leanpo {

class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct LabConfig {
  // [world]
  WorldSpec world = WorldSpec::standard();
  std::size_t vocab_size = 32;
  // [model]
  Backend backend = Backend::attention;
  AttentionConfig attention;
  std::string checkpoint;  // reference checkpoint; empty = fit one
  // [pretrain]
  PretrainConfig pretrain;
  // [pipeline]
  std::size_t n = 100;
  std::uint64_t data_seed = 0;
  AugmentationOp aug;
  PipelineConfig pipeline;
  double max_drop_rate = 0.5;
  // [reward] and [reward.<objective>]
  RewardConfig reward;
  std::map<Objective, std::vector<std::pair<std::string, std::string>>> reward_overrides;
  // [train]
  TrainConfig train;
  // [diagnose]
  std::size_t diagnose_window = 5;
  // [compare]
  std::vector<Objective> compare_objectives{Objective::leanpo, Objective::dpo};
  std::vector<std::uint64_t> compare_seeds{0};
  std::vector<double> compare_alphas;  // empty: reward.alpha only

  Vocab vocab() const;
  RewardConfig reward_for(Objective o) const;

  // Cross-field checks; throws ConfigError.
  void validate() const;
};

LabConfig parse_config(const std::string& text);
// Relative checkpoint paths are resolved against the file's directory.
LabConfig load_config(const std::filesystem::path& path);

// Applies "section.key=value" on top of a parsed config and revalidates.
void apply_override(LabConfig& cfg, const std::string& assignment);

// Every key with its effective value, in a fixed order. Parsing this text
// gives back an equal config.
std::string config_text(const LabConfig& cfg);
std::string config_digest(const LabConfig& cfg);

// "0..4", "0,2,5" or "3" (whitespace also separates).
std::vector<std::uint64_t> parse_seed_list(const std::string& s);
std::vector<Objective> parse_objective_list(const std::string& s);
std::vector<double> parse_real_list(const std::string& s);

// Shortest decimal that reads back to the same double.
std::string format_real(double v);

}  // namespace leanpo
