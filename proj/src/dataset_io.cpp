#include "leanpo/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace leanpo {

using nlohmann::json;

namespace {

json spec_json(const WorldSpec& s) {
  return json{{"num-events", s.num_events},       {"video-length", s.video_length},
              {"noise-rate", s.noise_rate},       {"event-tokens", s.event_tokens},
              {"query-tokens", s.query_tokens},   {"marker-tokens", s.marker_tokens},
              {"summary-token", s.summary_token}};
}

WorldSpec spec_from_json(const json& j) {
  WorldSpec s;
  s.num_events = j.at("num-events").get<std::size_t>();
  s.video_length = j.at("video-length").get<std::size_t>();
  s.noise_rate = j.at("noise-rate").get<double>();
  s.event_tokens = j.at("event-tokens").get<std::vector<Token>>();
  s.query_tokens = j.at("query-tokens").get<std::vector<Token>>();
  s.marker_tokens = j.at("marker-tokens").get<std::vector<Token>>();
  s.summary_token = j.at("summary-token").get<Token>();
  return s;
}

TokenSeq tokens_field(const json& j, const char* name) {
  const json& v = j.at(name);
  if (!v.is_array()) throw InvalidInput(std::string("field '") + name + "' is not an array");
  TokenSeq out;
  for (const json& t : v) {
    if (!t.is_number_unsigned()) throw InvalidInput(std::string("field '") + name + "' holds a non-token value");
    out.push_back(t.get<Token>());
  }
  return out;
}

double real_field(const json& j, const char* name) {
  const json& v = j.at(name);
  if (!v.is_number()) throw InvalidInput(std::string("field '") + name + "' is not a number");
  return v.get<double>();
}

const char* kPairFields[] = {"id",     "video",          "query",           "answer",       "winning",
                             "losing", "reward-win-sft", "reward-lose-sft", "augmentation", "seed"};

}  // namespace

std::string pair_json_line(const PreferencePair& p) {
  json j = {{"id", p.id},
            {"video", p.video},
            {"query", p.query},
            {"answer", p.answer},
            {"winning", p.winning},
            {"losing", p.losing},
            {"reward-win-sft", p.reward_win_sft},
            {"reward-lose-sft", p.reward_lose_sft},
            {"augmentation", p.augmentation},
            {"seed", p.seed}};
  return j.dump();
}

std::string dataset_text(const Dataset& d) {
  json h = {{"format", "leanpo-dataset"},
            {"pipeline-version", d.header.pipeline_version},
            {"seed", d.header.seed},
            {"model-digest", d.header.model_digest},
            {"augmentation", d.header.augmentation},
            {"count", d.pairs.size()},
            {"spec", spec_json(d.header.spec)}};
  std::string out = h.dump() + "\n";
  for (const auto& p : d.pairs) out += pair_json_line(p) + "\n";
  return out;
}

Dataset parse_dataset(const std::string& text, const Vocab& vocab) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset d;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError(lineno, std::string("not a JSON object: ") + e.what());
    }
    if (!j.is_object()) throw DatasetError(lineno, "not a JSON object");
    try {
      if (!have_header) {
        if (j.value("format", "") != "leanpo-dataset") throw InvalidInput("missing dataset header");
        d.header.pipeline_version = j.at("pipeline-version").get<int>();
        if (d.header.pipeline_version != kPipelineVersion)
          throw InvalidInput("unsupported pipeline version " + std::to_string(d.header.pipeline_version));
        d.header.seed = j.at("seed").get<std::uint64_t>();
        d.header.model_digest = j.at("model-digest").get<std::string>();
        d.header.augmentation = j.at("augmentation").get<std::string>();
        d.header.count = j.at("count").get<std::size_t>();
        d.header.spec = spec_from_json(j.at("spec"));
        have_header = true;
        continue;
      }
      for (const char* f : kPairFields)
        if (!j.contains(f)) throw InvalidInput(std::string("missing field '") + f + "'");
      if (j.size() != std::size(kPairFields)) throw InvalidInput("unexpected extra fields");
      PreferencePair p;
      p.id = j.at("id").get<std::string>();
      p.video = tokens_field(j, "video");
      p.query = tokens_field(j, "query");
      p.answer = tokens_field(j, "answer");
      p.winning = tokens_field(j, "winning");
      p.losing = tokens_field(j, "losing");
      p.reward_win_sft = real_field(j, "reward-win-sft");
      p.reward_lose_sft = real_field(j, "reward-lose-sft");
      p.augmentation = j.at("augmentation").get<std::string>();
      if (!j.at("seed").is_number_unsigned()) throw InvalidInput("field 'seed' is not an unsigned integer");
      p.seed = j.at("seed").get<std::uint64_t>();
      for (const TokenSeq* s : {&p.video, &p.query, &p.answer}) vocab.check(*s, "record tokens");
      if (!pair_is_valid(vocab, p)) throw InvalidInput("record violates pair invariants");
      d.pairs.push_back(std::move(p));
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetError(lineno, e.what());
    }
  }
  if (!have_header) throw DatasetError(std::max<std::size_t>(lineno, 1), "missing dataset header");
  if (d.pairs.size() != d.header.count)
    throw DatasetError(lineno, "header promises " + std::to_string(d.header.count) + " records, found " +
                                   std::to_string(d.pairs.size()));
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw InvalidInput("cannot write " + path.string());
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, dataset_text(d)); }

Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab) {
  return parse_dataset(read_file(path), vocab);
}

}  // namespace leanpo
