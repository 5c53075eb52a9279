#pragma once

// Synthetic video-QA world and the preference-pair generator built on it.
//
// A video is a row of frame tokens split into num_events equal segments; the
// latent program is the event token shown in each segment, plus sparse frame
// noise. Query k asks for the event of segment k and the ground-truth answer
// is that single event token.
//
// The SFT analog is taught a chattier response format than the bare answer:
//   [marker_k, e_k, summary, e_0, ..., e_{n-1}]
// so the terse answer sits far from what the model likes to say.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leanpo/policy.hpp"
#include "leanpo/rewards.hpp"
#include "leanpo/vocab.hpp"

namespace leanpo {

struct WorldSpec {
  std::size_t num_events = 4;
  std::vector<Token> event_tokens;   // defaults to 14..29
  std::size_t video_length = 24;
  std::vector<Token> query_tokens;   // one per event index, defaults to 5..
  std::vector<Token> marker_tokens;  // one per event index, defaults to 9..
  Token summary_token = 13;
  double noise_rate = 0.05;

  static WorldSpec standard();

  // Throws InvalidInput on overlapping token roles, reserved ids, bad sizes.
  void validate(const Vocab& vocab) const;
  std::size_t segment_begin(std::size_t k) const;
  std::size_t segment_end(std::size_t k) const;
};

struct WorldInstance {
  TokenSeq video;
  TokenSeq query;
  TokenSeq answer;
  std::vector<Token> events;  // latent program
  std::size_t query_index = 0;
};

WorldInstance gen_world(const WorldSpec& spec, std::uint64_t seed);

// Majority event per segment of an observed video; nullopt on a tie or when
// the video does not have the spec's length.
std::optional<std::vector<Token>> recover_events(const WorldSpec& spec, const TokenSeq& video);
std::optional<std::size_t> query_index(const WorldSpec& spec, const TokenSeq& query);
bool check_answer(const WorldSpec& spec, const TokenSeq& video, const TokenSeq& query,
                  const TokenSeq& answer);

// Tokens the response claims as its answer: what follows the first marker,
// up to the summary token (the whole prefix before summary when unmarked).
TokenSeq claimed_answer(const WorldSpec& spec, const TokenSeq& response);
// Multiset overlap of the claimed answer with the ground truth, in [0, 1].
double answer_overlap(const WorldSpec& spec, const TokenSeq& response, const TokenSeq& answer);

TokenSeq teacher_response(const WorldSpec& spec, const std::vector<Token>& events, std::size_t k);

TokenSeq plain_context(const Vocab& vocab, const TokenSeq& video, const TokenSeq& query);
TokenSeq hint_context(const Vocab& vocab, const TokenSeq& answer, const TokenSeq& video,
                      const TokenSeq& query);
TokenSeq reflection_context(const Vocab& vocab, const TokenSeq& answer, const TokenSeq& initial,
                            const TokenSeq& video, const TokenSeq& query);

struct GenerationConfig {
  std::size_t max_len = 10;
  double temperature = 0.5;
  std::size_t reflection_rounds = 1;
};

TokenSeq gen_winning(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                     const TokenSeq& answer, std::uint64_t seed, const GenerationConfig& gen = {});

enum class AugKind { frame_drop, frame_shuffle, token_noise };

std::string to_string(AugKind k);
AugKind parse_aug_kind(const std::string& s);

struct AugmentationOp {
  AugKind kind = AugKind::frame_drop;
  double strength = 0.3;
  // token-noise draws replacements from here; the standard event set if empty
  std::vector<Token> replacement_tokens;

  void validate() const;
  std::string tag() const;
};

TokenSeq apply_augmentation(const TokenSeq& video, const AugmentationOp& op, std::uint64_t seed);

TokenSeq gen_losing(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                    const AugmentationOp& aug, std::uint64_t seed, const GenerationConfig& gen = {});

// Plain-context sample with no hint and no augmentation.
TokenSeq gen_direct(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                    std::uint64_t seed, const GenerationConfig& gen = {});

struct PreferencePair {
  std::string id;
  TokenSeq video;
  TokenSeq query;
  TokenSeq answer;
  TokenSeq winning;
  TokenSeq losing;
  double reward_win_sft = 0.0;
  double reward_lose_sft = 0.0;
  std::string augmentation;
  std::uint64_t seed = 0;

  bool operator==(const PreferencePair&) const = default;
};

// Non-empty, no reserved tokens, finite rewards, in vocabulary.
bool pair_is_valid(const Vocab& vocab, const PreferencePair& p);

struct PipelineConfig {
  GenerationConfig gen;
  double beta = 2.0;              // scale of the stored rewards
  bool filter_misordered = false;  // drop pairs with reward_win <= reward_lose
  std::size_t max_attempts_factor = 4;
};

struct DatasetBuild {
  std::vector<PreferencePair> pairs;
  std::size_t attempted = 0;
  std::size_t dropped_invalid = 0;
  std::size_t dropped_misordered = 0;
};

// Tries records 0, 1, ... (each with its own derived seed) until n survive or
// n * max_attempts_factor attempts have been made.
DatasetBuild build_dataset(const WorldSpec& spec, const FrozenReference& reference, std::size_t n,
                           const AugmentationOp& aug, std::uint64_t seed,
                           const PipelineConfig& cfg = {});

// Seeds of the per-record random streams.
std::uint64_t record_seed(std::uint64_t dataset_seed, std::size_t index);
std::string record_id(std::size_t index);

}  // namespace leanpo
