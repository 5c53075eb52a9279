#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "leanpo/policy.hpp"
#include "leanpo/run_record.hpp"
#include "leanpo/synth.hpp"

namespace leanpo {

struct DisplacementRow {
  std::string label;
  double delta_logp_win = 0.0;
  double delta_logp_lose = 0.0;
  bool displacement_flag = false;
  double margin_growth = 0.0;
  double final_margin = 0.0;   // mean margin over the last window
  double final_zq_rate = 0.0;  // mean zq-rate over the last window
};

struct DisplacementReport {
  std::size_t window = 0;
  double delta_logp_win = 0.0;
  double delta_logp_lose = 0.0;
  bool displacement_flag = false;  // both deltas strictly negative
  double margin_growth = 0.0;
  std::vector<DisplacementRow> per_seed;
};

// Deltas between the mean of the first and of the last `window` rows.
DisplacementReport displacement_report(const RunRecord& run, std::size_t window);
DisplacementReport displacement_report(const std::vector<MetricsRow>& rows, std::size_t window);

// Averages several per-seed reports; the flag is recomputed from the means.
DisplacementReport combine_reports(const std::vector<std::pair<std::string, DisplacementReport>>& runs);

std::string report_csv(const DisplacementReport& r);
std::string report_text(const DisplacementReport& r, const std::string& title);

enum class ResponseClass { answer, winning, losing, hint_free_sample };

std::string to_string(ResponseClass c);
ResponseClass parse_response_class(const std::string& s);

struct ProfileSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  std::vector<double> values;  // per record, dataset order

  bool operator==(const ProfileSummary&) const = default;
};

// avg_loglik_reward of one response class per record, scored by `model` in
// the plain context. hint-free samples are drawn from `reference` with a seed
// derived from the record seed.
ProfileSummary reward_profile(const PolicyModel& model, const PolicyModel& reference,
                              const std::vector<PreferencePair>& data, ResponseClass which, double beta,
                              const GenerationConfig& gen = {});

// Linear-interpolation quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct Series {
  std::string name;
  std::vector<double> values;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::vector<Series>& series);

// Writes <prefix>.csv plus <prefix>-likelihood.svg, -leanpo-reward.svg,
// -dpo-reward.svg and -gate.svg. Returns the paths written.
std::vector<std::filesystem::path> emit_curves(const RunRecord& run, const std::string& out_prefix);

}  // namespace leanpo
