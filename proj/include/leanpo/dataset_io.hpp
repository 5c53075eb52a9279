#pragma once

// Dataset file: JSON Lines. Line 1 is a header object, every following line
// one PreferencePair with the field names
//   id, video, query, answer, winning, losing, reward-win-sft,
//   reward-lose-sft, augmentation, seed
// Token sequences are integer arrays; reals use shortest round-trip decimals.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leanpo/error.hpp"
#include "leanpo/synth.hpp"

namespace leanpo {

inline constexpr int kPipelineVersion = 1;

struct DatasetHeader {
  std::uint64_t seed = 0;
  std::string model_digest;
  WorldSpec spec;
  std::string augmentation;
  std::size_t count = 0;
  int pipeline_version = kPipelineVersion;
};

struct Dataset {
  DatasetHeader header;
  std::vector<PreferencePair> pairs;
};

// Thrown with the 1-based line number of the first offending line.
class DatasetError : public InvalidInput {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : InvalidInput("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string pair_json_line(const PreferencePair& p);
std::string dataset_text(const Dataset& d);
Dataset parse_dataset(const std::string& text, const Vocab& vocab);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab);

std::string read_file(const std::filesystem::path& path);
// Writes atomically enough for our purposes: whole buffer, error names the path.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace leanpo
