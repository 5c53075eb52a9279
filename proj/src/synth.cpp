#include "leanpo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "leanpo/error.hpp"
#include "leanpo/rng.hpp"

namespace leanpo {

namespace {

std::vector<Token> token_range(Token first, std::size_t n) {
  std::vector<Token> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = first + static_cast<Token>(i);
  return out;
}

// Stream ids inside one record.
enum : std::uint64_t { kWorldStream = 0, kWinStream = 1, kLoseStream = 2 };

}  // namespace

WorldSpec WorldSpec::standard() {
  WorldSpec s;
  s.event_tokens = token_range(14, 16);
  s.query_tokens = token_range(5, 4);
  s.marker_tokens = token_range(9, 4);
  s.summary_token = 13;
  return s;
}

void WorldSpec::validate(const Vocab& vocab) const {
  if (num_events < 1) throw InvalidInput("world: num-events must be >= 1");
  if (video_length < num_events) throw InvalidInput("world: video-length must be >= num-events");
  if (event_tokens.size() < 2) throw InvalidInput("world: need at least two event tokens");
  if (query_tokens.size() != num_events)
    throw InvalidInput("world: need one query token per event index");
  if (marker_tokens.size() != num_events)
    throw InvalidInput("world: need one marker token per event index");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw InvalidInput("world: noise-rate must be in [0, 1)");
  std::set<Token> seen;
  auto claim = [&](Token t, const char* role) {
    if (t >= vocab.size) throw InvalidInput(std::string("world: ") + role + " token out of vocabulary");
    if (vocab.is_reserved(t)) throw InvalidInput(std::string("world: ") + role + " token is reserved");
    if (!seen.insert(t).second) throw InvalidInput(std::string("world: ") + role + " token reused");
  };
  for (Token t : event_tokens) claim(t, "event");
  for (Token t : query_tokens) claim(t, "query");
  for (Token t : marker_tokens) claim(t, "marker");
  claim(summary_token, "summary");
}

std::size_t WorldSpec::segment_begin(std::size_t k) const { return k * video_length / num_events; }
std::size_t WorldSpec::segment_end(std::size_t k) const { return (k + 1) * video_length / num_events; }

WorldInstance gen_world(const WorldSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t ne = spec.event_tokens.size();
  WorldInstance w;
  w.events.resize(spec.num_events);
  for (std::size_t k = 0; k < spec.num_events; ++k) {
    // neighbouring segments never repeat an event
    Token e;
    do {
      e = spec.event_tokens[rng.below(ne)];
    } while (k > 0 && e == w.events[k - 1]);
    w.events[k] = e;
  }
  w.video.resize(spec.video_length);
  for (std::size_t k = 0; k < spec.num_events; ++k) {
    const std::size_t b = spec.segment_begin(k), end = spec.segment_end(k);
    // redraw noisy segments until the true event keeps a strict majority
    for (;;) {
      std::size_t keep = 0;
      for (std::size_t i = b; i < end; ++i) {
        if (rng.bernoulli(spec.noise_rate)) {
          w.video[i] = spec.event_tokens[rng.below(ne)];
        } else {
          w.video[i] = w.events[k];
        }
        if (w.video[i] == w.events[k]) ++keep;
      }
      if (2 * keep > end - b) break;
    }
  }
  w.query_index = rng.below(spec.num_events);
  w.query = {spec.query_tokens[w.query_index]};
  w.answer = {w.events[w.query_index]};
  return w;
}

std::optional<std::vector<Token>> recover_events(const WorldSpec& spec, const TokenSeq& video) {
  if (video.size() != spec.video_length) return std::nullopt;
  std::vector<Token> events(spec.num_events);
  for (std::size_t k = 0; k < spec.num_events; ++k) {
    std::map<Token, std::size_t> votes;
    for (std::size_t i = spec.segment_begin(k); i < spec.segment_end(k); ++i) ++votes[video[i]];
    std::size_t best = 0, second = 0;
    Token arg = 0;
    for (auto [t, c] : votes) {
      if (c > best) {
        second = best;
        best = c;
        arg = t;
      } else if (c > second) {
        second = c;
      }
    }
    if (best == second) return std::nullopt;
    events[k] = arg;
  }
  return events;
}

std::optional<std::size_t> query_index(const WorldSpec& spec, const TokenSeq& query) {
  if (query.size() != 1) return std::nullopt;
  auto it = std::find(spec.query_tokens.begin(), spec.query_tokens.end(), query[0]);
  if (it == spec.query_tokens.end()) return std::nullopt;
  return static_cast<std::size_t>(it - spec.query_tokens.begin());
}

bool check_answer(const WorldSpec& spec, const TokenSeq& video, const TokenSeq& query,
                  const TokenSeq& answer) {
  const auto events = recover_events(spec, video);
  const auto k = query_index(spec, query);
  if (!events || !k) return false;
  return answer == TokenSeq{(*events)[*k]};
}

TokenSeq claimed_answer(const WorldSpec& spec, const TokenSeq& response) {
  auto is_marker = [&](Token t) {
    return std::find(spec.marker_tokens.begin(), spec.marker_tokens.end(), t) != spec.marker_tokens.end();
  };
  auto begin = std::find_if(response.begin(), response.end(), is_marker);
  begin = begin == response.end() ? response.begin() : begin + 1;
  auto end = std::find(begin, response.end(), spec.summary_token);
  return TokenSeq(begin, end);
}

double answer_overlap(const WorldSpec& spec, const TokenSeq& response, const TokenSeq& answer) {
  if (answer.empty()) throw InvalidInput("answer_overlap: empty answer");
  TokenSeq claimed = claimed_answer(spec, response);
  std::size_t hit = 0;
  for (Token t : answer) {
    auto it = std::find(claimed.begin(), claimed.end(), t);
    if (it != claimed.end()) {
      ++hit;
      claimed.erase(it);
    }
  }
  return static_cast<double>(hit) / static_cast<double>(answer.size());
}

TokenSeq teacher_response(const WorldSpec& spec, const std::vector<Token>& events, std::size_t k) {
  TokenSeq out{spec.marker_tokens.at(k), events.at(k), spec.summary_token};
  out.insert(out.end(), events.begin(), events.end());
  return out;
}

TokenSeq plain_context(const Vocab& vocab, const TokenSeq& video, const TokenSeq& query) {
  TokenSeq sep{vocab.sep};
  return concat({&video, &sep, &query});
}

TokenSeq hint_context(const Vocab& vocab, const TokenSeq& answer, const TokenSeq& video,
                      const TokenSeq& query) {
  TokenSeq open{vocab.hint_open}, close{vocab.hint_close}, sep{vocab.sep};
  return concat({&open, &answer, &close, &video, &sep, &query});
}

TokenSeq reflection_context(const Vocab& vocab, const TokenSeq& answer, const TokenSeq& initial,
                            const TokenSeq& video, const TokenSeq& query) {
  TokenSeq open{vocab.hint_open}, close{vocab.hint_close}, sep{vocab.sep};
  return concat({&open, &answer, &close, &initial, &sep, &video, &sep, &query});
}

TokenSeq gen_winning(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                     const TokenSeq& answer, std::uint64_t seed, const GenerationConfig& gen) {
  const Vocab& vocab = model.vocab();
  TokenSeq y = sample(model, hint_context(vocab, answer, video, query), gen.max_len, gen.temperature,
                      derive_seed(seed, 0));
  for (std::size_t r = 0; r < gen.reflection_rounds; ++r) {
    const TokenSeq prior = strip_reserved(vocab, y);
    y = sample(model, reflection_context(vocab, answer, prior, video, query), gen.max_len,
               gen.temperature, derive_seed(seed, r + 1));
  }
  return strip_reserved(vocab, y);
}

std::string to_string(AugKind k) {
  switch (k) {
    case AugKind::frame_drop: return "frame-drop";
    case AugKind::frame_shuffle: return "frame-shuffle";
    case AugKind::token_noise: return "token-noise";
  }
  return "?";
}

AugKind parse_aug_kind(const std::string& s) {
  if (s == "frame-drop") return AugKind::frame_drop;
  if (s == "frame-shuffle") return AugKind::frame_shuffle;
  if (s == "token-noise") return AugKind::token_noise;
  throw InvalidInput("unknown augmentation '" + s + "' (valid: frame-drop, frame-shuffle, token-noise)");
}

void AugmentationOp::validate() const {
  if (!(strength > 0.0 && strength <= 1.0)) throw InvalidInput("augmentation strength must be in (0, 1]");
}

std::string AugmentationOp::tag() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s:%g", to_string(kind).c_str(), strength);
  return buf;
}

TokenSeq apply_augmentation(const TokenSeq& video, const AugmentationOp& op, std::uint64_t seed) {
  if (video.empty()) throw InvalidInput("apply_augmentation: empty video");
  Rng rng(seed);
  switch (op.kind) {
    case AugKind::frame_drop: {
      TokenSeq out;
      for (Token t : video)
        if (!rng.bernoulli(op.strength)) out.push_back(t);
      if (out.empty()) out.push_back(video[rng.below(video.size())]);
      return out;
    }
    case AugKind::frame_shuffle: {
      const std::size_t w =
          std::min(video.size(), static_cast<std::size_t>(std::llround(op.strength * static_cast<double>(video.size()))));
      TokenSeq out = video;
      if (w < 2) return out;
      const std::size_t start = rng.below(video.size() - w + 1);
      std::vector<Token> window(out.begin() + static_cast<std::ptrdiff_t>(start),
                                out.begin() + static_cast<std::ptrdiff_t>(start + w));
      rng.shuffle(window);
      std::copy(window.begin(), window.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
      return out;
    }
    case AugKind::token_noise: {
      const std::vector<Token> pool =
          op.replacement_tokens.empty() ? WorldSpec::standard().event_tokens : op.replacement_tokens;
      TokenSeq out = video;
      for (Token& t : out)
        if (rng.bernoulli(op.strength)) t = pool[rng.below(pool.size())];
      return out;
    }
  }
  return video;
}

TokenSeq gen_losing(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                    const AugmentationOp& aug, std::uint64_t seed, const GenerationConfig& gen) {
  const TokenSeq seen = apply_augmentation(video, aug, derive_seed(seed, 0));
  const TokenSeq y = sample(model, plain_context(model.vocab(), seen, query), gen.max_len,
                            gen.temperature, derive_seed(seed, 1));
  return strip_reserved(model.vocab(), y);
}

TokenSeq gen_direct(const PolicyModel& model, const TokenSeq& video, const TokenSeq& query,
                    std::uint64_t seed, const GenerationConfig& gen) {
  const TokenSeq y = sample(model, plain_context(model.vocab(), video, query), gen.max_len,
                            gen.temperature, seed);
  return strip_reserved(model.vocab(), y);
}

bool pair_is_valid(const Vocab& vocab, const PreferencePair& p) {
  for (const TokenSeq* s : {&p.winning, &p.losing}) {
    if (s->empty()) return false;
    for (Token t : *s)
      if (t >= vocab.size || vocab.is_reserved(t)) return false;
  }
  return std::isfinite(p.reward_win_sft) && std::isfinite(p.reward_lose_sft);
}

std::uint64_t record_seed(std::uint64_t dataset_seed, std::size_t index) {
  return derive_seed(dataset_seed, index);
}

std::string record_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair-%06zu", index);
  return buf;
}

DatasetBuild build_dataset(const WorldSpec& spec, const FrozenReference& reference, std::size_t n,
                           const AugmentationOp& aug, std::uint64_t seed, const PipelineConfig& cfg) {
  if (n < 1) throw InvalidInput("build_dataset: n must be >= 1");
  const PolicyModel& model = reference.model();
  spec.validate(model.vocab());
  aug.validate();
  AugmentationOp op = aug;
  if (op.replacement_tokens.empty()) op.replacement_tokens = spec.event_tokens;

  DatasetBuild out;
  const std::size_t max_attempts = n * std::max<std::size_t>(cfg.max_attempts_factor, 1);
  for (std::size_t i = 0; out.pairs.size() < n && i < max_attempts; ++i) {
    ++out.attempted;
    const std::uint64_t s = record_seed(seed, i);
    const WorldInstance w = gen_world(spec, derive_seed(s, kWorldStream));
    PreferencePair p;
    p.id = record_id(i);
    p.video = w.video;
    p.query = w.query;
    p.answer = w.answer;
    p.augmentation = op.tag();
    p.seed = s;
    p.winning = gen_winning(model, w.video, w.query, w.answer, derive_seed(s, kWinStream), cfg.gen);
    p.losing = gen_losing(model, w.video, w.query, op, derive_seed(s, kLoseStream), cfg.gen);
    if (p.winning.empty() || p.losing.empty()) {
      ++out.dropped_invalid;
      continue;
    }
    const TokenSeq ctx = plain_context(model.vocab(), w.video, w.query);
    p.reward_win_sft = avg_loglik_reward(token_logprobs(model, ctx, p.winning), cfg.beta);
    p.reward_lose_sft = avg_loglik_reward(token_logprobs(model, ctx, p.losing), cfg.beta);
    if (!pair_is_valid(model.vocab(), p)) {
      ++out.dropped_invalid;
      continue;
    }
    if (cfg.filter_misordered && !(p.reward_win_sft > p.reward_lose_sft)) {
      ++out.dropped_misordered;
      continue;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace leanpo
