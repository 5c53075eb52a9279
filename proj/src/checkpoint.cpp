#include "leanpo/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "leanpo/digest.hpp"

namespace leanpo {

namespace {

constexpr const char* kFormat = "leanpo-checkpoint";
constexpr int kVersion = 1;

}  // namespace

std::string checkpoint_text(const PolicyModel& model) {
  using nlohmann::json;
  const Vocab& v = model.vocab();
  const AttentionConfig& a = model.attention_config();
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["backend"] = to_string(model.backend());
  doc["vocab"] = {{"size", v.size}, {"bos", v.bos}, {"eos", v.eos}, {"sep", v.sep},
                  {"hint_open", v.hint_open}, {"hint_close", v.hint_close},
                  {"control_tokens", v.control_tokens}};
  doc["attention"] = {{"width", a.width}, {"hidden", a.hidden},
                      {"context_window", a.context_window}, {"init_scale", a.init_scale}};
  json params = json::array();
  for (const auto& p : model.parameter_list()) {
    params.push_back({{"name", p.name},
                      {"shape", {p.value.shape.rows, p.value.shape.cols}},
                      {"values", p.value.data}});
  }
  doc["params"] = std::move(params);
  doc["counts"] = model.counts();
  return doc.dump() + "\n";
}

PolicyModel parse_checkpoint(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("format") != kFormat) throw InvalidInput("checkpoint: not a leanpo checkpoint");
    if (doc.at("version") != kVersion) throw InvalidInput("checkpoint: unsupported version");
    Vocab v;
    const auto& jv = doc.at("vocab");
    v.size = jv.at("size");
    v.bos = jv.at("bos");
    v.eos = jv.at("eos");
    v.sep = jv.at("sep");
    v.hint_open = jv.at("hint_open");
    v.hint_close = jv.at("hint_close");
    v.control_tokens = jv.at("control_tokens");
    AttentionConfig a;
    const auto& ja = doc.at("attention");
    a.width = ja.at("width");
    a.hidden = ja.at("hidden");
    a.context_window = ja.at("context_window");
    a.init_scale = ja.at("init_scale");
    std::vector<Parameter> params;
    for (const auto& jp : doc.at("params")) {
      const std::size_t rows = jp.at("shape").at(0);
      const std::size_t cols = jp.at("shape").at(1);
      params.emplace_back(jp.at("name").get<std::string>(),
                          Tensor::matrix(rows, cols, jp.at("values").get<std::vector<double>>()));
    }
    return PolicyModel::from_parts(parse_backend(doc.at("backend")), v, a, std::move(params),
                                   doc.at("counts").get<std::vector<std::uint64_t>>());
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write checkpoint " + path.string());
  out << checkpoint_text(model);
  if (!out) throw InvalidInput("cannot write checkpoint " + path.string());
}

PolicyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::string model_digest(const PolicyModel& model) { return digest_hex(checkpoint_text(model)); }

}  // namespace leanpo
