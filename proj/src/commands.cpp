#include "leanpo/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "leanpo/checkpoint.hpp"
#include "leanpo/digest.hpp"
#include "leanpo/rng.hpp"

namespace leanpo {

namespace fs = std::filesystem;

fs::path resolve_output(const fs::path& p) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

std::string manifest_text(const Manifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "leanpo_lab";
  j["tool-version"] = kToolVersion;
  j["role"] = m.role;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config-file-digest"] = m.config_file_digest;
  j["config-digest"] = m.config_digest;
  j["reference-digest"] = m.reference_digest;
  j["status"] = m.status;
  nlohmann::ordered_json arts = nlohmann::ordered_json::object();
  for (const auto& [name, digest] : m.artifacts) arts[name] = digest;
  j["artifacts"] = arts;
  j["config"] = m.config;
  return j.dump(2) + "\n";
}

void write_manifest(const fs::path& dir, const Manifest& m) { write_file(dir / "manifest.json", manifest_text(m)); }

Manifest read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw InvalidInput("missing manifest: " + p.string());
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(read_file(p));
    m.role = j.at("role");
    m.command = j.at("command").get<std::vector<std::string>>();
    m.seed = j.at("seed");
    m.config_file_digest = j.at("config-file-digest");
    m.config_digest = j.at("config-digest");
    m.reference_digest = j.at("reference-digest");
    m.status = j.at("status");
    m.config = j.at("config");
    for (const auto& [k, v] : j.at("artifacts").items()) m.artifacts.emplace_back(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
  return m;
}

PolicyModel fit_reference(const LabConfig& cfg) {
  const Vocab vocab = cfg.vocab();
  if (cfg.backend == Backend::attention) return fit_sft_analog(cfg.world, vocab, cfg.attention, cfg.pretrain);
  // bigram: count pairs over the same supervised stream
  std::vector<TokenSeq> corpus;
  const std::uint64_t base = derive_seed(cfg.pretrain.seed, 1);
  for (std::size_t i = 0; i < cfg.pretrain.steps * cfg.pretrain.batch_size; ++i) {
    const SftExample ex = sft_example(cfg.world, vocab, cfg.pretrain, derive_seed(base, i));
    TokenSeq seq = ex.context;
    seq.insert(seq.end(), ex.target.begin(), ex.target.end());
    corpus.push_back(std::move(seq));
  }
  return fit_bigram(vocab, corpus);
}

PolicyModel obtain_reference(const LabConfig& cfg) {
  if (cfg.checkpoint.empty()) return fit_reference(cfg);
  if (!fs::exists(cfg.checkpoint)) throw ConfigError("model.checkpoint: file not found: " + cfg.checkpoint);
  PolicyModel m = load_checkpoint(cfg.checkpoint);
  if (!(m.vocab() == cfg.vocab()))
    throw ConfigError("model.checkpoint: vocabulary does not match [world] vocab-size");
  return m;
}

Dataset generate_dataset(const LabConfig& cfg, const PolicyModel& reference, DatasetBuild* stats) {
  if (!(reference.vocab() == cfg.vocab())) throw ConfigError("reference vocabulary does not match the config");
  AugmentationOp aug = cfg.aug;
  if (aug.replacement_tokens.empty()) aug.replacement_tokens = cfg.world.event_tokens;
  DatasetBuild build = build_dataset(cfg.world, freeze_reference(reference), cfg.n, aug, cfg.data_seed, cfg.pipeline);
  if (stats) *stats = build;
  const std::size_t dropped = build.attempted - build.pairs.size();
  const double rate = build.attempted ? static_cast<double>(dropped) / static_cast<double>(build.attempted) : 0.0;
  if (build.pairs.size() < cfg.n || rate > cfg.max_drop_rate) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "data quality: kept %zu of %zu requested pairs after %zu attempts "
                  "(%zu invalid, %zu misordered; drop rate %.3f, limit %.3f)",
                  build.pairs.size(), cfg.n, build.attempted, build.dropped_invalid, build.dropped_misordered, rate,
                  cfg.max_drop_rate);
    throw DataQualityError(buf);
  }
  Dataset d;
  d.header.seed = cfg.data_seed;
  d.header.model_digest = model_digest(reference);
  d.header.spec = cfg.world;
  d.header.augmentation = aug.tag();
  d.header.count = build.pairs.size();
  d.pairs = std::move(build.pairs);
  return d;
}

namespace {

// Writes text, remembers its digest for the manifest.
struct ArtifactWriter {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> written;

  void put(const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    written.emplace_back(name, digest_hex(text));
  }
  void add_existing(const fs::path& p) { written.emplace_back(p.filename().string(), digest_hex(read_file(p))); }
};

Manifest base_manifest(const std::vector<std::string>& command, const std::string& role, const LabConfig& cfg,
                       const std::string& config_file_digest) {
  Manifest m;
  m.command = command;
  m.role = role;
  m.config = config_text(cfg);
  m.config_digest = digest_hex(m.config);
  m.config_file_digest = config_file_digest;
  return m;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create directory " + dir.string() + ": " + ec.message());
}

// Runs one training job into dir. Partial metrics survive a numeric abort.
RunRecord train_into(const fs::path& dir, PolicyModel& model, const std::vector<PreferencePair>& pairs,
                     const LabConfig& cfg, Manifest manifest) {
  make_dir(dir);
  ArtifactWriter w{dir, {}};
  std::vector<MetricsRow> rows;
  RunRecord record;
  try {
    record = train(model, pairs, cfg.train, cfg.reward_for(cfg.train.objective),
                   [&](const MetricsRow& r) { rows.push_back(r); });
  } catch (const NumericAbort& e) {
    if (!rows.empty()) w.put("metrics.csv", metrics_csv(rows));
    manifest.artifacts = w.written;
    manifest.status = std::string("numeric abort: ") + e.what();
    write_manifest(dir, manifest);
    throw;
  }
  w.put("checkpoint.json", checkpoint_text(model));
  for (const auto& p : emit_curves(record, (dir / "metrics").string())) w.add_existing(p);
  manifest.artifacts = w.written;
  write_manifest(dir, manifest);
  return record;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Variant {
  std::string label;
  Objective objective;
  std::optional<double> alpha;
};

std::vector<Variant> compare_variants(const LabConfig& cfg) {
  std::vector<Variant> out;
  for (Objective o : cfg.compare_objectives) {
    if (o == Objective::leanpo && !cfg.compare_alphas.empty()) {
      for (double a : cfg.compare_alphas) out.push_back({"leanpo-a" + format_real(a), o, a});
    } else {
      out.push_back({to_string(o), o, std::nullopt});
    }
  }
  return out;
}

std::string compare_summary(const CompareResult& res, const LabConfig& cfg) {
  std::string out = "reference " + res.reference_digest + ", window " + std::to_string(cfg.diagnose_window) + "\n\n";
  std::vector<std::string> labels;
  for (const auto& r : res.runs)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  for (const auto& label : labels) {
    std::vector<std::pair<std::string, DisplacementReport>> ok;
    std::size_t total = 0, displaced = 0, win_kept = 0, grew = 0;
    for (const auto& r : res.runs) {
      if (r.label != label) continue;
      ++total;
      if (r.status != "ok") continue;
      ok.emplace_back("seed " + std::to_string(r.seed), r.report);
      displaced += r.report.displacement_flag;
      win_kept += r.report.delta_logp_win >= -0.05;
      grew += r.report.margin_growth > 0.0;
    }
    if (ok.empty()) {
      out += label + ": no successful runs\n\n";
      continue;
    }
    out += report_text(combine_reports(ok), label);
    out += "  displaced " + std::to_string(displaced) + "/" + std::to_string(total) + ", winning kept (>= -0.05) " +
           std::to_string(win_kept) + "/" + std::to_string(total) + ", margin grew " + std::to_string(grew) + "/" +
           std::to_string(total) + "\n\n";
  }
  for (const auto& r : res.runs)
    if (r.status != "ok") out += "FAILED " + r.label + " seed " + std::to_string(r.seed) + ": " + r.status + "\n";
  return out;
}

}  // namespace

CompareResult run_compare(const LabConfig& cfg, const fs::path& out, const std::vector<std::string>& command,
                          const std::optional<PolicyModel>& reference) {
  cfg.validate();
  if (cfg.compare_objectives.size() < 2) throw ConfigError("compare: needs at least two objectives");
  make_dir(out);
  CompareResult res;
  auto fail_with = [&](int code) {
    if (res.exit_code == kExitOk) res.exit_code = code;
  };

  const PolicyModel ref = reference ? *reference : obtain_reference(cfg);
  res.reference_digest = model_digest(ref);
  {
    const fs::path dir = out / "reference";
    make_dir(dir);
    ArtifactWriter w{dir, {}};
    w.put("reference.json", checkpoint_text(ref));
    Manifest m = base_manifest(command, "compare/reference", cfg, "");
    m.seed = cfg.pretrain.seed;
    m.reference_digest = res.reference_digest;
    m.artifacts = w.written;
    write_manifest(dir, m);
  }

  std::map<std::uint64_t, Dataset> data;
  std::map<std::uint64_t, std::string> data_failure;
  for (std::uint64_t seed : cfg.compare_seeds) {
    LabConfig dcfg = cfg;
    dcfg.data_seed = derive_seed(cfg.data_seed, seed);
    const fs::path dir = out / ("data-s" + std::to_string(seed));
    make_dir(dir);
    Manifest m = base_manifest(command, "compare/data", dcfg, "");
    m.seed = dcfg.data_seed;
    m.reference_digest = res.reference_digest;
    try {
      Dataset d = generate_dataset(dcfg, ref);
      ArtifactWriter w{dir, {}};
      w.put("dataset.jsonl", dataset_text(d));
      m.artifacts = w.written;
      data.emplace(seed, std::move(d));
    } catch (const DataQualityError& e) {
      data_failure[seed] = e.what();
      m.status = e.what();
      fail_with(kExitDataQuality);
    }
    write_manifest(dir, m);
  }

  for (const Variant& v : compare_variants(cfg)) {
    for (std::uint64_t seed : cfg.compare_seeds) {
      CompareRun run;
      run.label = v.label;
      run.objective = v.objective;
      run.seed = seed;
      run.dir = out / (v.label + "-s" + std::to_string(seed));
      LabConfig rcfg = cfg;
      rcfg.train.objective = v.objective;
      rcfg.train.seed = seed;
      rcfg.data_seed = derive_seed(cfg.data_seed, seed);
      if (v.alpha) apply_override(rcfg, "reward." + to_string(v.objective) + ".alpha=" + format_real(*v.alpha));
      run.alpha = rcfg.reward_for(v.objective).alpha;
      if (data_failure.count(seed)) {
        run.status = "no dataset: " + data_failure[seed];
        res.runs.push_back(std::move(run));
        continue;
      }
      Manifest m = base_manifest(command, "compare/train", rcfg, "");
      m.seed = seed;
      m.reference_digest = res.reference_digest;
      PolicyModel model = ref;
      try {
        run.record = train_into(run.dir, model, data.at(seed).pairs, rcfg, m);
        run.report = displacement_report(run.record, cfg.diagnose_window);
      } catch (const NumericAbort& e) {
        run.status = std::string("numeric abort: ") + e.what();
        fail_with(kExitNumeric);
      } catch (const InvalidInput& e) {
        run.status = e.what();
        fail_with(kExitUsage);
      }
      res.runs.push_back(std::move(run));
    }
  }

  // joined outputs
  ArtifactWriter w{out, {}};
  std::string csv =
      "label,objective,alpha,seed,window,delta-logp-win,delta-logp-lose,displacement-flag,margin-growth,final-margin,"
      "final-zq-rate,status\n";
  for (const auto& r : res.runs) {
    csv += r.label + "," + to_string(r.objective) + "," + format_real(r.alpha) + "," + std::to_string(r.seed) + ",";
    if (r.status == "ok") {
      const auto& row = r.report.per_seed.front();
      csv += std::to_string(r.report.window) + "," + format_real(r.report.delta_logp_win) + "," +
             format_real(r.report.delta_logp_lose) + "," + (r.report.displacement_flag ? "true" : "false") + "," +
             format_real(r.report.margin_growth) + "," + format_real(row.final_margin) + "," +
             (r.objective == Objective::leanpo ? format_real(row.final_zq_rate) : "") + ",ok\n";
    } else {
      std::string status = r.status;
      std::replace(status.begin(), status.end(), ',', ';');
      csv += ",,,,,,," + status + "\n";
    }
  }
  w.put("report.csv", csv);

  // zq-rate only means something for the gated objective
  std::vector<const CompareRun*> gated;
  std::size_t steps = 0;
  for (const auto& r : res.runs) {
    if (r.objective == Objective::leanpo && r.status == "ok") {
      gated.push_back(&r);
      steps = std::max(steps, r.record.rows.size());
    }
  }
  if (!gated.empty()) {
    std::string zq = "step";
    for (const auto* r : gated) zq += "," + r->label + "-s" + std::to_string(r->seed);
    zq += "\n";
    for (std::size_t s = 0; s < steps; ++s) {
      zq += std::to_string(s);
      for (const auto* r : gated) zq += "," + (s < r->record.rows.size() ? format_real(r->record.rows[s].zq_rate) : "");
      zq += "\n";
    }
    w.put("zq-rate.csv", zq);
  }

  for (std::uint64_t seed : cfg.compare_seeds) {
    auto series = [&](double MetricsRow::*f) {
      std::vector<Series> out_series;
      for (const auto& r : res.runs) {
        if (r.seed != seed || r.status != "ok") continue;
        Series s{r.label, {}};
        for (const auto& row : r.record.rows) s.values.push_back(row.*f);
        out_series.push_back(std::move(s));
      }
      return out_series;
    };
    const std::string stem = "curves-s" + std::to_string(seed);
    const std::string tag = " (seed " + std::to_string(seed) + ")";
    w.put(stem + "-logp-win.svg",
          svg_line_chart("winning log-likelihood" + tag, "step", series(&MetricsRow::mean_logp_win)));
    w.put(stem + "-logp-lose.svg",
          svg_line_chart("losing log-likelihood" + tag, "step", series(&MetricsRow::mean_logp_lose)));
    w.put(stem + "-margin.svg", svg_line_chart("average-likelihood margin" + tag, "step", series(&MetricsRow::margin)));
  }
  w.put("report.txt", compare_summary(res, cfg));

  Manifest m = base_manifest(command, "compare", cfg, "");
  m.seed = cfg.data_seed;
  m.reference_digest = res.reference_digest;
  m.artifacts = w.written;
  if (res.exit_code != kExitOk) m.status = "some sub-runs failed";
  write_manifest(out, m);
  return res;
}

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

LabConfig load_with_overrides(const Common& c, std::string* file_digest) {
  LabConfig cfg = load_config(c.config);
  *file_digest = digest_hex(read_file(c.config));
  for (const auto& s : c.sets) apply_override(cfg, s);
  return cfg;
}

void set_if(LabConfig& cfg, const std::optional<std::string>& v, const std::string& key) {
  if (v) apply_override(cfg, key + "=" + *v);
}

int cmd_gen_data(const std::vector<std::string>& command, const Common& c, const std::string& out_flag,
                 const std::map<std::string, std::optional<std::string>>& flags,
                 const std::optional<std::string>& pretrain_steps, std::ostream& out) {
  std::string file_digest;
  LabConfig cfg = load_with_overrides(c, &file_digest);
  for (const auto& [key, v] : flags) set_if(cfg, v, key);
  if (pretrain_steps) {
    set_if(cfg, pretrain_steps, "pretrain.steps");
    cfg.checkpoint.clear();
  } else if (cfg.checkpoint.empty()) {
    throw ConfigError("no reference checkpoint: set [model] checkpoint or pass --pretrain-steps");
  }
  const fs::path dir = resolve_output(out_flag);
  make_dir(dir);
  if (pretrain_steps) out << "fitting reference policy (" << cfg.pretrain.steps << " steps)\n";
  const PolicyModel ref = obtain_reference(cfg);
  Manifest m = base_manifest(command, "gen-data", cfg, file_digest);
  m.seed = cfg.data_seed;
  m.reference_digest = model_digest(ref);
  ArtifactWriter w{dir, {}};
  w.put("reference.json", checkpoint_text(ref));
  DatasetBuild stats;
  Dataset d;
  try {
    d = generate_dataset(cfg, ref, &stats);
  } catch (const DataQualityError& e) {
    m.artifacts = w.written;
    m.status = e.what();
    write_manifest(dir, m);
    throw;
  }
  w.put("dataset.jsonl", dataset_text(d));
  m.artifacts = w.written;
  write_manifest(dir, m);
  std::size_t ordered = 0;
  for (const auto& p : d.pairs) ordered += p.reward_win_sft > p.reward_lose_sft;
  out << "wrote " << d.pairs.size() << " pairs to " << (dir / "dataset.jsonl").string() << " (attempted "
      << stats.attempted << ", invalid " << stats.dropped_invalid << ", misordered dropped "
      << stats.dropped_misordered << ", reward-ordered " << ordered << ")\n";
  return kExitOk;
}

int cmd_train(const std::vector<std::string>& command, const Common& c, const std::string& data_flag,
              const std::string& out_flag, const std::optional<std::string>& objective,
              const std::optional<std::string>& seed, std::ostream& out) {
  std::string file_digest;
  LabConfig cfg = load_with_overrides(c, &file_digest);
  set_if(cfg, objective, "train.objective");
  set_if(cfg, seed, "train.seed");
  const fs::path data_path(data_flag);
  if (!fs::exists(data_path)) throw InvalidInput("dataset not found: " + data_path.string());
  Dataset d;
  try {
    d = load_dataset(data_path, cfg.vocab());
  } catch (const DatasetError& e) {
    throw InvalidInput(data_path.string() + ": " + e.what());
  }
  if (d.pairs.empty()) throw InvalidInput(data_path.string() + ": dataset has no pairs");
  fs::path ref_path = cfg.checkpoint.empty() ? data_path.parent_path() / "reference.json" : fs::path(cfg.checkpoint);
  if (!fs::exists(ref_path)) throw ConfigError("reference checkpoint not found: " + ref_path.string());
  PolicyModel model = load_checkpoint(ref_path);
  const std::string ref_digest = model_digest(model);
  if (ref_digest != d.header.model_digest)
    throw ConfigError("reference " + ref_path.string() + " (digest " + ref_digest +
                      ") is not the model the dataset was generated with (" + d.header.model_digest + ")");
  const fs::path dir = resolve_output(out_flag);
  Manifest m = base_manifest(command, "train", cfg, file_digest);
  m.seed = cfg.train.seed;
  m.reference_digest = ref_digest;
  const RunRecord rec = train_into(dir, model, d.pairs, cfg, m);
  const MetricsRow& last = rec.rows.back();
  out << "trained " << to_string(cfg.train.objective) << " for " << rec.rows.size() << " steps; final loss "
      << fmt("%.6g", last.loss) << ", margin " << fmt("%.6g", last.margin) << "; wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& command, const Common& c, const std::string& out_flag,
                const std::optional<std::string>& objectives, const std::optional<std::string>& seeds,
                std::ostream& out, std::ostream& err) {
  std::string file_digest;
  LabConfig cfg = load_with_overrides(c, &file_digest);
  set_if(cfg, objectives, "compare.objectives");
  set_if(cfg, seeds, "compare.seeds");
  const fs::path dir = resolve_output(out_flag);
  const CompareResult res = run_compare(cfg, dir, command);
  out << read_file(dir / "report.txt");
  if (res.exit_code != kExitOk) err << "some sub-runs failed; partial artifacts kept in " << dir.string() << "\n";
  return res.exit_code;
}

int cmd_diagnose(const std::vector<std::string>& command, const std::string& run_flag,
                 const std::optional<std::size_t>& window_flag, const std::optional<std::string>& out_flag,
                 std::ostream& out) {
  const fs::path run(run_flag);
  const fs::path metrics = run / "metrics.csv";
  if (!fs::exists(metrics)) throw InvalidInput("missing metrics: " + metrics.string());
  const Manifest run_manifest = read_manifest(run);
  std::size_t window = 5;
  if (window_flag) {
    window = *window_flag;
  } else if (!run_manifest.config.empty()) {
    window = parse_config(run_manifest.config).diagnose_window;
  }
  const auto rows = parse_metrics_csv(read_file(metrics));
  const DisplacementReport rep = displacement_report(rows, window);
  const fs::path dir = out_flag ? resolve_output(*out_flag) : run / "diagnosis";
  make_dir(dir);
  ArtifactWriter w{dir, {}};
  const std::string text = report_text(rep, "displacement report for " + run.string());
  w.put("displacement.csv", report_csv(rep));
  w.put("displacement.txt", text);
  Manifest m;
  m.command = command;
  m.role = "diagnose";
  m.seed = run_manifest.seed;
  m.config = run_manifest.config;
  m.config_digest = run_manifest.config_digest;
  m.config_file_digest = run_manifest.config_file_digest;
  m.reference_digest = run_manifest.reference_digest;
  m.artifacts = w.written;
  write_manifest(dir, m);
  out << text;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"leanpo_lab: preference-optimization experiments on a synthetic video-QA world"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common gen_common, train_common, cmp_common;
  std::string gen_out, train_out, train_data, cmp_out, diag_run;
  std::optional<std::string> n, seed, aug, strength, drop_rate, pretrain_steps, objective, train_seed, objectives,
      seeds, diag_out;
  std::optional<std::size_t> window;

  auto common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "configuration file")->required();
    sub->add_option("--set", c.sets, "override a config key, section.key=value (repeatable)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a preference dataset");
  common(gen, gen_common);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", n, "number of pairs");
  gen->add_option("--seed", seed, "dataset seed");
  gen->add_option("--aug", aug, "frame-drop, frame-shuffle or token-noise");
  gen->add_option("--aug-strength", strength, "augmentation strength in (0, 1]");
  gen->add_option("--max-drop-rate", drop_rate, "largest tolerated share of dropped records");
  gen->add_option("--pretrain-steps", pretrain_steps, "fit the reference policy first, for this many steps");

  CLI::App* tr = app.add_subcommand("train", "train a policy on a dataset");
  common(tr, train_common);
  tr->add_option("--data", train_data, "dataset file")->required();
  tr->add_option("--objective", objective, "leanpo, dpo, simpo or sft");
  tr->add_option("--out", train_out, "output directory")->required();
  tr->add_option("--seed", train_seed, "training seed");

  CLI::App* cmp = app.add_subcommand("compare", "run objectives side by side from one reference");
  common(cmp, cmp_common);
  cmp->add_option("--out", cmp_out, "output directory")->required();
  cmp->add_option("--objectives", objectives, "comma-separated objectives");
  cmp->add_option("--seeds", seeds, "seed list such as 0..4 or 0,3,7");

  CLI::App* diag = app.add_subcommand("diagnose", "likelihood-displacement report for a finished run");
  diag->add_option("--run", diag_run, "run directory")->required();
  diag->add_option("--window", window, "steps averaged at each end");
  diag->add_option("--out", diag_out, "output directory (default <run>/diagnosis)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  std::vector<std::string> command{"leanpo_lab"};
  command.insert(command.end(), args.begin(), args.end());
  try {
    if (gen->parsed()) {
      return cmd_gen_data(command, gen_common, gen_out,
                          {{"pipeline.n", n},
                           {"pipeline.seed", seed},
                           {"pipeline.aug", aug},
                           {"pipeline.aug-strength", strength},
                           {"pipeline.max-drop-rate", drop_rate}},
                          pretrain_steps, out);
    }
    if (tr->parsed()) return cmd_train(command, train_common, train_data, train_out, objective, train_seed, out);
    if (cmp->parsed()) return cmd_compare(command, cmp_common, cmp_out, objectives, seeds, out, err);
    if (diag->parsed()) return cmd_diagnose(command, diag_run, window, diag_out, out);
  } catch (const DataQualityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataQuality;
  } catch (const NumericAbort& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace leanpo
