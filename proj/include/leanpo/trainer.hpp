#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "leanpo/losses.hpp"
#include "leanpo/optim.hpp"
#include "leanpo/run_record.hpp"
#include "leanpo/synth.hpp"

namespace leanpo {

enum class Objective { leanpo, dpo, simpo, sft };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);  // lists valid names on error

// What the sft objective imitates: the ground-truth answer or the winning response.
enum class SftTarget { answer, winning };

std::string to_string(SftTarget t);
SftTarget parse_sft_target(const std::string& s);

struct TrainConfig {
  Objective objective = Objective::leanpo;
  OptimizerConfig optimizer;  // lr defaults to 1e-3
  std::size_t batch_size = 8;
  std::size_t epochs = 1;
  std::optional<double> grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  SftTarget sft_target = SftTarget::answer;
  // Keep a model snapshot every this many steps (0 = none).
  std::size_t snapshot_every = 0;

  // lr >= 0 (0 is allowed for dry runs), batch-size >= 1, epochs >= 1.
  void validate() const;
};

// Everything an objective may look at for one batch.
struct ObjectiveInputs {
  PolicyGraph& graph;
  const PairBatch& batch;
  const RewardConfig& reward;
  const std::vector<TokenSeq>& contexts;     // plain [V, SEP, q] per pair
  const std::vector<TokenSeq>& sft_targets;  // per pair
};

using ObjectiveLoss = Value (*)(const ObjectiveInputs&);

ObjectiveLoss objective_loss(Objective o);

std::vector<std::size_t> shuffle_epoch(std::size_t n, std::size_t epoch, std::uint64_t seed);

std::string config_digest(const TrainConfig& cfg, const RewardConfig& reward);

using StepCallback = std::function<void(const MetricsRow&)>;

// Trains `model` in place. The frozen reference is a copy of the model as
// passed in; every objective gets reference sums since the metrics use them.
// Throws NumericAbort on a non-finite loss.
RunRecord train(PolicyModel& model, const std::vector<PreferencePair>& data, const TrainConfig& cfg,
                const RewardConfig& reward, const StepCallback& on_step = {});

}  // namespace leanpo
