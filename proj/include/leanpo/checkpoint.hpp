#pragma once

#include <filesystem>
#include <string>

#include "leanpo/policy.hpp"

namespace leanpo {

// Checkpoint file: one JSON document holding the backend tag, vocabulary,
// attention shape config, and every parameter array as decimal reals printed
// in shortest round-trip form, so reloading is bit-exact.
std::string checkpoint_text(const PolicyModel& model);
PolicyModel parse_checkpoint(const std::string& text);

void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path);
PolicyModel load_checkpoint(const std::filesystem::path& path);

// Digest of checkpoint_text(model).
std::string model_digest(const PolicyModel& model);

}  // namespace leanpo
