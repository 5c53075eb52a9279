#include "leanpo/config.hpp"

#include <charconv>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "leanpo/dataset_io.hpp"
#include "leanpo/digest.hpp"

namespace leanpo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw InvalidInput("expected a non-negative integer, got '" + s + "'");
  return v;
}

double to_real(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw InvalidInput("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw InvalidInput("expected true or false, got '" + s + "'");
}

std::optional<double> to_clip(const std::string& s) {
  if (s == "none") return std::nullopt;
  return to_real(s);
}

std::string clip_text(const std::optional<double>& v) { return v ? format_real(*v) : "none"; }

std::vector<Token> to_tokens(const std::string& s) {
  std::vector<Token> out;
  for (const auto& item : split_list(s)) {
    const std::uint64_t v = to_uint(item);
    if (v > std::numeric_limits<Token>::max()) throw InvalidInput("token id too large: " + item);
    out.push_back(static_cast<Token>(v));
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(LabConfig&, const std::string&)> set;
  std::function<std::string(const LabConfig&)> get;
};

using RewardSetter = std::function<void(RewardConfig&, const std::string&)>;
using RewardGetter = std::function<std::string(const RewardConfig&)>;

struct RewardField {
  const char* key;
  RewardSetter set;
  RewardGetter get;
};

const std::vector<RewardField>& reward_fields() {
  static const std::vector<RewardField> f = {
      {"beta", [](RewardConfig& r, const std::string& v) { r.beta = to_real(v); },
       [](const RewardConfig& r) { return format_real(r.beta); }},
      {"gamma", [](RewardConfig& r, const std::string& v) { r.gamma = to_real(v); },
       [](const RewardConfig& r) { return format_real(r.gamma); }},
      {"alpha", [](RewardConfig& r, const std::string& v) { r.alpha = to_real(v); },
       [](const RewardConfig& r) { return format_real(r.alpha); }},
      {"d", [](RewardConfig& r, const std::string& v) { r.d = to_real(v); },
       [](const RewardConfig& r) { return format_real(r.d); }},
      {"variant", [](RewardConfig& r, const std::string& v) { r.variant = parse_loss_variant(v); },
       [](const RewardConfig& r) { return to_string(r.variant); }},
      {"smoothing", [](RewardConfig& r, const std::string& v) { r.smoothing = parse_smoothing_mode(v); },
       [](const RewardConfig& r) { return to_string(r.smoothing); }},
      {"zq-source", [](RewardConfig& r, const std::string& v) { r.zq_source = parse_zq_source(v); },
       [](const RewardConfig& r) { return to_string(r.zq_source); }},
      {"reverse", [](RewardConfig& r, const std::string& v) { r.reverse = parse_reverse_probability(v); },
       [](const RewardConfig& r) { return to_string(r.reverse); }},
  };
  return f;
}

const RewardField* find_reward_field(const std::string& key) {
  for (const auto& f : reward_fields())
    if (key == f.key) return &f;
  return nullptr;
}

#define REAL(sec, name, member)                                                      \
  Field {                                                                            \
    sec, name, [](LabConfig& c, const std::string& v) { c.member = to_real(v); },   \
        [](const LabConfig& c) { return format_real(c.member); }                     \
  }
#define UINT(sec, name, member)                                                                     \
  Field {                                                                                           \
    sec, name, [](LabConfig& c, const std::string& v) { c.member = to_uint(v); },                  \
        [](const LabConfig& c) { return std::to_string(c.member); }                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      UINT("world", "vocab-size", vocab_size),
      UINT("world", "num-events", world.num_events),
      UINT("world", "video-length", world.video_length),
      REAL("world", "noise-rate", world.noise_rate),
      {"world", "event-tokens", [](LabConfig& c, const std::string& v) { c.world.event_tokens = to_tokens(v); },
       [](const LabConfig& c) { return join(c.world.event_tokens, [](Token t) { return std::to_string(t); }); }},
      {"world", "query-tokens", [](LabConfig& c, const std::string& v) { c.world.query_tokens = to_tokens(v); },
       [](const LabConfig& c) { return join(c.world.query_tokens, [](Token t) { return std::to_string(t); }); }},
      {"world", "marker-tokens", [](LabConfig& c, const std::string& v) { c.world.marker_tokens = to_tokens(v); },
       [](const LabConfig& c) { return join(c.world.marker_tokens, [](Token t) { return std::to_string(t); }); }},
      {"world", "summary-token",
       [](LabConfig& c, const std::string& v) {
         const auto t = to_tokens(v);
         if (t.size() != 1) throw InvalidInput("expected one token id");
         c.world.summary_token = t[0];
       },
       [](const LabConfig& c) { return std::to_string(c.world.summary_token); }},

      {"model", "backend", [](LabConfig& c, const std::string& v) { c.backend = parse_backend(v); },
       [](const LabConfig& c) { return to_string(c.backend); }},
      UINT("model", "width", attention.width),
      UINT("model", "hidden", attention.hidden),
      UINT("model", "context-window", attention.context_window),
      REAL("model", "init-scale", attention.init_scale),
      {"model", "checkpoint", [](LabConfig& c, const std::string& v) { c.checkpoint = v; },
       [](const LabConfig& c) { return c.checkpoint; }},

      UINT("pretrain", "steps", pretrain.steps),
      UINT("pretrain", "batch-size", pretrain.batch_size),
      REAL("pretrain", "lr", pretrain.lr),
      REAL("pretrain", "hint-fraction", pretrain.hint_fraction),
      REAL("pretrain", "reflection-fraction", pretrain.reflection_fraction),
      REAL("pretrain", "draft-corruption", pretrain.draft_corruption),
      REAL("pretrain", "summary-noise", pretrain.summary_noise),
      REAL("pretrain", "dropped-fraction", pretrain.dropped_fraction),
      REAL("pretrain", "max-drop", pretrain.max_drop),
      {"pretrain", "grad-clip-norm", [](LabConfig& c, const std::string& v) { c.pretrain.grad_clip_norm = to_clip(v); },
       [](const LabConfig& c) { return clip_text(c.pretrain.grad_clip_norm); }},
      UINT("pretrain", "seed", pretrain.seed),

      UINT("pipeline", "n", n),
      UINT("pipeline", "seed", data_seed),
      {"pipeline", "aug", [](LabConfig& c, const std::string& v) { c.aug.kind = parse_aug_kind(v); },
       [](const LabConfig& c) { return to_string(c.aug.kind); }},
      REAL("pipeline", "aug-strength", aug.strength),
      UINT("pipeline", "max-len", pipeline.gen.max_len),
      REAL("pipeline", "temperature", pipeline.gen.temperature),
      UINT("pipeline", "reflection-rounds", pipeline.gen.reflection_rounds),
      REAL("pipeline", "reward-beta", pipeline.beta),
      {"pipeline", "filter-misordered",
       [](LabConfig& c, const std::string& v) { c.pipeline.filter_misordered = to_bool(v); },
       [](const LabConfig& c) { return std::string(c.pipeline.filter_misordered ? "true" : "false"); }},
      UINT("pipeline", "max-attempts-factor", pipeline.max_attempts_factor),
      REAL("pipeline", "max-drop-rate", max_drop_rate),

      {"train", "objective", [](LabConfig& c, const std::string& v) { c.train.objective = parse_objective(v); },
       [](const LabConfig& c) { return to_string(c.train.objective); }},
      {"train", "optimizer", [](LabConfig& c, const std::string& v) { c.train.optimizer.kind = parse_optimizer(v); },
       [](const LabConfig& c) { return to_string(c.train.optimizer.kind); }},
      REAL("train", "lr", train.optimizer.lr),
      REAL("train", "adam-beta1", train.optimizer.beta1),
      REAL("train", "adam-beta2", train.optimizer.beta2),
      REAL("train", "adam-eps", train.optimizer.eps),
      UINT("train", "batch-size", train.batch_size),
      UINT("train", "epochs", train.epochs),
      {"train", "grad-clip-norm", [](LabConfig& c, const std::string& v) { c.train.grad_clip_norm = to_clip(v); },
       [](const LabConfig& c) { return clip_text(c.train.grad_clip_norm); }},
      UINT("train", "seed", train.seed),
      {"train", "sft-target", [](LabConfig& c, const std::string& v) { c.train.sft_target = parse_sft_target(v); },
       [](const LabConfig& c) { return to_string(c.train.sft_target); }},
      UINT("train", "snapshot-every", train.snapshot_every),

      UINT("diagnose", "window", diagnose_window),

      {"compare", "objectives",
       [](LabConfig& c, const std::string& v) { c.compare_objectives = parse_objective_list(v); },
       [](const LabConfig& c) {
         return join(c.compare_objectives, [](Objective o) { return to_string(o); });
       }},
      {"compare", "seeds", [](LabConfig& c, const std::string& v) { c.compare_seeds = parse_seed_list(v); },
       [](const LabConfig& c) {
         return join(c.compare_seeds, [](std::uint64_t s) { return std::to_string(s); });
       }},
      {"compare", "alphas", [](LabConfig& c, const std::string& v) { c.compare_alphas = parse_real_list(v); },
       [](const LabConfig& c) { return join(c.compare_alphas, [](double a) { return format_real(a); }); }},
  };
  return f;
}

#undef REAL
#undef UINT

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

std::optional<Objective> override_section(const std::string& section) {
  if (section.rfind("reward.", 0) != 0) return std::nullopt;
  return parse_objective(section.substr(7));
}

// Assigns one key; messages are returned bare so callers can anchor them.
void assign(LabConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  if (section == "reward") {
    const RewardField* f = find_reward_field(key);
    if (!f) throw InvalidInput("unknown key '" + key + "' in [reward]");
    f->set(cfg.reward, value);
    return;
  }
  if (auto obj = override_section(section)) {
    const RewardField* f = find_reward_field(key);
    if (!f) throw InvalidInput("unknown key '" + key + "' in [" + section + "]");
    RewardConfig probe;
    f->set(probe, value);
    const std::string norm = f->get(probe);
    auto& list = cfg.reward_overrides[*obj];
    for (auto& kv : list) {
      if (kv.first == key) {
        kv.second = norm;
        return;
      }
    }
    list.emplace_back(key, norm);
    return;
  }
  const Field* f = find_field(section, key);
  if (!f) {
    bool known_section = false;
    for (const auto& g : fields()) known_section = known_section || section == g.section;
    if (!known_section) throw InvalidInput("unknown section [" + section + "]");
    throw InvalidInput("unknown key '" + key + "' in [" + section + "]");
  }
  f->set(cfg, value);
}

// Validation groups, each tied to the section its message refers to.
std::vector<std::pair<std::string, std::function<void(const LabConfig&)>>> checks() {
  return {
      {"world",
       [](const LabConfig& c) {
         c.vocab().validate();
         c.world.validate(c.vocab());
       }},
      {"model",
       [](const LabConfig& c) {
         if (c.attention.width < 1 || c.attention.hidden < 1 || c.attention.context_window < 1)
           throw InvalidInput("model: width, hidden and context-window must be >= 1");
         if (!(c.attention.init_scale > 0.0)) throw InvalidInput("model: init-scale must be positive");
       }},
      {"pretrain", [](const LabConfig& c) { c.pretrain.validate(); }},
      {"pipeline",
       [](const LabConfig& c) {
         if (c.n < 1) throw InvalidInput("pipeline: n must be >= 1");
         c.aug.validate();
         if (c.pipeline.gen.max_len < 1) throw InvalidInput("pipeline: max-len must be >= 1");
         if (!(c.pipeline.gen.temperature > 0.0)) throw InvalidInput("pipeline: temperature must be positive");
         if (!(c.pipeline.beta > 0.0)) throw InvalidInput("pipeline: reward-beta must be positive");
         if (c.pipeline.max_attempts_factor < 1) throw InvalidInput("pipeline: max-attempts-factor must be >= 1");
         if (!(c.max_drop_rate >= 0.0 && c.max_drop_rate <= 1.0))
           throw InvalidInput("pipeline: max-drop-rate must be in [0, 1]");
       }},
      {"reward", [](const LabConfig& c) { c.reward.validate(); }},
      {"train", [](const LabConfig& c) { c.train.validate(); }},
      {"diagnose",
       [](const LabConfig& c) {
         if (c.diagnose_window < 1) throw InvalidInput("diagnose: window must be >= 1");
       }},
      {"compare",
       [](const LabConfig& c) {
         if (c.compare_objectives.empty()) throw InvalidInput("compare: objectives must not be empty");
         if (c.compare_seeds.empty()) throw InvalidInput("compare: seeds must not be empty");
         for (double a : c.compare_alphas) {
           RewardConfig r = c.reward;
           r.alpha = a;
           r.validate();
         }
       }},
  };
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  const std::string t = trim(s);
  const auto dots = t.find("..");
  std::vector<std::uint64_t> out;
  if (dots != std::string::npos) {
    const std::uint64_t a = to_uint(trim(t.substr(0, dots)));
    const std::uint64_t b = to_uint(trim(t.substr(dots + 2)));
    if (b < a) throw InvalidInput("seed range '" + t + "' is empty");
    if (b - a >= 100000) throw InvalidInput("seed range '" + t + "' is too long");
    for (std::uint64_t v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  for (const auto& item : split_list(t)) out.push_back(to_uint(item));
  if (out.empty()) throw InvalidInput("empty seed list");
  return out;
}

std::vector<Objective> parse_objective_list(const std::string& s) {
  std::vector<Objective> out;
  for (const auto& item : split_list(s)) {
    const Objective o = parse_objective(item);
    for (Objective seen : out)
      if (seen == o) throw InvalidInput("objective '" + item + "' listed twice");
    out.push_back(o);
  }
  if (out.empty()) throw InvalidInput("empty objective list");
  return out;
}

std::vector<double> parse_real_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_real(item));
  return out;
}

Vocab LabConfig::vocab() const {
  Vocab v;
  v.size = vocab_size;
  return v;
}

RewardConfig LabConfig::reward_for(Objective o) const {
  RewardConfig r = reward;
  const auto it = reward_overrides.find(o);
  if (it == reward_overrides.end()) return r;
  for (const auto& [key, value] : it->second) find_reward_field(key)->set(r, value);
  return r;
}

void LabConfig::validate() const {
  for (const auto& [section, check] : checks()) {
    try {
      check(*this);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& [o, kv] : reward_overrides) {
    try {
      reward_for(o).validate();
    } catch (const InvalidInput& e) {
      throw ConfigError("[reward." + to_string(o) + "]: " + e.what());
    }
  }
}

LabConfig parse_config(const std::string& text) {
  LabConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  std::string section;
  std::map<std::string, std::size_t> section_line;
  std::set<std::string> seen;
  auto fail = [&](const std::string& msg) -> void {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section_line.count(section)) fail("section [" + section + "] repeated");
      bool known = section == "reward";
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known) {
        try {
          known = override_section(section).has_value();
        } catch (const InvalidInput& e) {
          fail("unknown section [" + section + "]: " + e.what());
        }
      }
      if (!known) fail("unknown section [" + section + "]");
      section_line[section] = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (!seen.insert(section + "." + key).second) fail("key '" + key + "' repeated in [" + section + "]");
    try {
      assign(cfg, section, key, value);
    } catch (const InvalidInput& e) {
      fail(key + ": " + e.what());
    }
  }
  // cross-field checks point at the section header they concern
  for (const auto& [section, check] : checks()) {
    try {
      check(cfg);
    } catch (const InvalidInput& e) {
      const auto it = section_line.find(section);
      lineno = it == section_line.end() ? 0 : it->second;
      if (lineno == 0) throw ConfigError(std::string("config: ") + e.what());
      fail(e.what());
    }
  }
  for (const auto& [o, kv] : cfg.reward_overrides) {
    try {
      cfg.reward_for(o).validate();
    } catch (const InvalidInput& e) {
      lineno = section_line["reward." + to_string(o)];
      fail(e.what());
    }
  }
  return cfg;
}

LabConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  LabConfig cfg;
  try {
    cfg = parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!cfg.checkpoint.empty()) {
    const std::filesystem::path cp(cfg.checkpoint);
    if (cp.is_relative()) cfg.checkpoint = std::filesystem::absolute(path.parent_path() / cp).lexically_normal().string();
  }
  return cfg;
}

void apply_override(LabConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string lhs = trim(assignment.substr(0, eq));
  const auto dot = lhs.rfind('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0)
    throw ConfigError("override '" + assignment + "': expected section.key=value");
  const std::string section = lhs.substr(0, dot), key = lhs.substr(dot + 1);
  LabConfig next = cfg;
  try {
    assign(next, section, key, trim(assignment.substr(eq + 1)));
    next.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
  cfg = std::move(next);
}

std::string config_text(const LabConfig& cfg) {
  std::string out;
  std::string section;
  bool reward_done = false;
  auto open = [&](const std::string& s) {
    if (s == section) return;
    out += (out.empty() ? "[" : "\n[") + s + "]\n";
    section = s;
  };
  for (const auto& f : fields()) {
    if (std::string(f.section) == "train" && !reward_done) {
      // reward sections go before train, matching the sample file
      reward_done = true;
      {
        open("reward");
        for (const auto& r : reward_fields()) out += std::string(r.key) + " = " + r.get(cfg.reward) + "\n";
        for (const auto& [o, kv] : cfg.reward_overrides) {
          if (kv.empty()) continue;
          open("reward." + to_string(o));
          for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
        }
      }
    }
    open(f.section);
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::string config_digest(const LabConfig& cfg) { return digest_hex(config_text(cfg)); }

}  // namespace leanpo
