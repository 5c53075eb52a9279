#pragma once

// Operator commands behind the leanpo_lab tool. Each command writes its
// artifacts plus one manifest.json into its output directory.
//
// Exit codes: 0 ok, 2 usage or config, 3 data quality, 4 numeric abort.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "leanpo/config.hpp"
#include "leanpo/dataset_io.hpp"
#include "leanpo/diagnostics.hpp"

namespace leanpo {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "LEANPO_OUTPUT_ROOT";

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitDataQuality = 3, kExitNumeric = 4 };

class DataQualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Relative paths land under $LEANPO_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& p);

struct Manifest {
  std::vector<std::string> command;
  std::string role;  // gen-data, train, compare/sft, ...
  std::string config_file_digest;
  std::string config_digest;
  std::string config;  // effective config text
  std::uint64_t seed = 0;
  std::string reference_digest;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, digest
  std::string status = "ok";
};

std::string manifest_text(const Manifest& m);
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

// Fits the reference policy described by cfg.model / cfg.pretrain.
PolicyModel fit_reference(const LabConfig& cfg);
// cfg.checkpoint when set, otherwise a fresh fit.
PolicyModel obtain_reference(const LabConfig& cfg);

// Builds cfg.n pairs from cfg.data_seed. Throws DataQualityError when fewer
// than n pairs survive or the drop rate exceeds cfg.max_drop_rate.
Dataset generate_dataset(const LabConfig& cfg, const PolicyModel& reference, DatasetBuild* stats = nullptr);

struct CompareRun {
  std::string label;
  Objective objective = Objective::leanpo;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  RunRecord record;
  DisplacementReport report;
  std::string status = "ok";
};

struct CompareResult {
  std::string reference_digest;
  std::vector<CompareRun> runs;
  int exit_code = kExitOk;
};

// The full comparison: one reference, one dataset per seed, one training run
// per (variant, seed). Sub-run failures are recorded and the rest continue.
CompareResult run_compare(const LabConfig& cfg, const std::filesystem::path& out,
                          const std::vector<std::string>& command = {},
                          const std::optional<PolicyModel>& reference = std::nullopt);

// Entry point of the leanpo_lab tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace leanpo
