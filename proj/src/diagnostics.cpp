#include "leanpo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "leanpo/dataset_io.hpp"
#include "leanpo/error.hpp"
#include "leanpo/rewards.hpp"
#include "leanpo/rng.hpp"

namespace leanpo {

namespace {

double window_mean(const std::vector<MetricsRow>& rows, std::size_t begin, std::size_t end,
                   double MetricsRow::*field) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += rows[i].*field;
  return s / static_cast<double>(end - begin);
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* kMetricsHeader =
    "step,mean-logp-win,mean-logp-lose,leanpo-reward-win,leanpo-reward-lose,dpo-reward-win,"
    "dpo-reward-lose,margin,zq-rate,loss";

}  // namespace

DisplacementReport displacement_report(const std::vector<MetricsRow>& rows, std::size_t window) {
  if (window < 1) throw InvalidInput("displacement_report: window must be >= 1");
  if (rows.size() < 2 * window) {
    throw InvalidInput("displacement_report: run has " + std::to_string(rows.size()) +
                       " steps, needs at least 2 * window = " + std::to_string(2 * window));
  }
  const std::size_t n = rows.size();
  DisplacementReport r;
  r.window = window;
  auto delta = [&](double MetricsRow::*f) {
    return window_mean(rows, n - window, n, f) - window_mean(rows, 0, window, f);
  };
  r.delta_logp_win = delta(&MetricsRow::mean_logp_win);
  r.delta_logp_lose = delta(&MetricsRow::mean_logp_lose);
  r.margin_growth = delta(&MetricsRow::margin);
  r.displacement_flag = r.delta_logp_win < 0.0 && r.delta_logp_lose < 0.0;
  DisplacementRow row;
  row.delta_logp_win = r.delta_logp_win;
  row.delta_logp_lose = r.delta_logp_lose;
  row.displacement_flag = r.displacement_flag;
  row.margin_growth = r.margin_growth;
  row.final_margin = window_mean(rows, n - window, n, &MetricsRow::margin);
  row.final_zq_rate = window_mean(rows, n - window, n, &MetricsRow::zq_rate);
  r.per_seed.push_back(row);
  return r;
}

DisplacementReport displacement_report(const RunRecord& run, std::size_t window) {
  return displacement_report(run.rows, window);
}

DisplacementReport combine_reports(const std::vector<std::pair<std::string, DisplacementReport>>& runs) {
  if (runs.empty()) throw InvalidInput("combine_reports: nothing to combine");
  DisplacementReport out;
  out.window = runs.front().second.window;
  for (const auto& [label, r] : runs) {
    out.delta_logp_win += r.delta_logp_win;
    out.delta_logp_lose += r.delta_logp_lose;
    out.margin_growth += r.margin_growth;
    for (DisplacementRow row : r.per_seed) {
      row.label = label;
      out.per_seed.push_back(row);
    }
  }
  const double n = static_cast<double>(runs.size());
  out.delta_logp_win /= n;
  out.delta_logp_lose /= n;
  out.margin_growth /= n;
  out.displacement_flag = out.delta_logp_win < 0.0 && out.delta_logp_lose < 0.0;
  return out;
}

std::string report_csv(const DisplacementReport& r) {
  std::string out = "label,window,delta-logp-win,delta-logp-lose,displacement-flag,margin-growth,final-margin,final-zq-rate\n";
  auto line = [&](const std::string& label, const DisplacementRow& row) {
    out += label + "," + std::to_string(r.window) + "," + fmt_real(row.delta_logp_win) + "," +
           fmt_real(row.delta_logp_lose) + "," + (row.displacement_flag ? "true" : "false") + "," +
           fmt_real(row.margin_growth) + "," + fmt_real(row.final_margin) + "," + fmt_real(row.final_zq_rate) + "\n";
  };
  for (const auto& row : r.per_seed) line(row.label.empty() ? "run" : row.label, row);
  if (r.per_seed.size() > 1) {
    DisplacementRow mean;
    mean.delta_logp_win = r.delta_logp_win;
    mean.delta_logp_lose = r.delta_logp_lose;
    mean.displacement_flag = r.displacement_flag;
    mean.margin_growth = r.margin_growth;
    for (const auto& row : r.per_seed) {
      mean.final_margin += row.final_margin / static_cast<double>(r.per_seed.size());
      mean.final_zq_rate += row.final_zq_rate / static_cast<double>(r.per_seed.size());
    }
    line("mean", mean);
  }
  return out;
}

std::string report_text(const DisplacementReport& r, const std::string& title) {
  std::ostringstream out;
  char buf[256];
  out << title << "\n";
  out << "window: " << r.window << " steps\n";
  std::snprintf(buf, sizeof buf, "delta log p(winning): %+.4f nats\ndelta log p(losing):  %+.4f nats\n",
                r.delta_logp_win, r.delta_logp_lose);
  out << buf;
  std::snprintf(buf, sizeof buf, "margin growth:        %+.4f\n", r.margin_growth);
  out << buf;
  out << "likelihood displacement: " << (r.displacement_flag ? "yes (both likelihoods fell)" : "no") << "\n";
  if (r.per_seed.size() > 1) {
    out << "\n  run               dW          dL          margin+    displaced\n";
    for (const auto& row : r.per_seed) {
      std::snprintf(buf, sizeof buf, "  %-14s %+10.4f  %+10.4f  %+10.4f   %s\n", row.label.c_str(), row.delta_logp_win,
                    row.delta_logp_lose, row.margin_growth, row.displacement_flag ? "yes" : "no");
      out << buf;
    }
  }
  return out.str();
}

std::string to_string(ResponseClass c) {
  switch (c) {
    case ResponseClass::answer: return "answer";
    case ResponseClass::winning: return "winning";
    case ResponseClass::losing: return "losing";
    case ResponseClass::hint_free_sample: return "hint-free-sample";
  }
  return "?";
}

ResponseClass parse_response_class(const std::string& s) {
  if (s == "answer") return ResponseClass::answer;
  if (s == "winning") return ResponseClass::winning;
  if (s == "losing") return ResponseClass::losing;
  if (s == "hint-free-sample") return ResponseClass::hint_free_sample;
  throw InvalidInput("unknown response class '" + s + "' (valid: answer, winning, losing, hint-free-sample)");
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) throw InvalidInput("quantile of empty data");
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ProfileSummary reward_profile(const PolicyModel& model, const PolicyModel& reference,
                              const std::vector<PreferencePair>& data, ResponseClass which, double beta,
                              const GenerationConfig& gen) {
  if (data.empty()) throw InvalidInput("reward_profile: empty dataset");
  ProfileSummary s;
  for (const auto& p : data) {
    TokenSeq response;
    switch (which) {
      case ResponseClass::answer: response = p.answer; break;
      case ResponseClass::winning: response = p.winning; break;
      case ResponseClass::losing: response = p.losing; break;
      case ResponseClass::hint_free_sample:
        response = gen_direct(reference, p.video, p.query, derive_seed(p.seed, 7), gen);
        break;
    }
    // an empty sample scores as the worst observed token would; skip instead
    if (response.empty()) continue;
    const TokenSeq ctx = plain_context(model.vocab(), p.video, p.query);
    s.values.push_back(avg_loglik_reward(token_logprobs(model, ctx, response), beta));
  }
  if (s.values.empty()) throw InvalidInput("reward_profile: no scorable responses");
  s.count = s.values.size();
  const double n = static_cast<double>(s.count);
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / n);
  std::vector<double> sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q25 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q75 = quantile_sorted(sorted, 0.75);
  return s;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    for (double v : {r.mean_logp_win, r.mean_logp_lose, r.leanpo_reward_win, r.leanpo_reward_lose,
                     r.dpo_reward_win, r.dpo_reward_lose, r.margin, r.zq_rate, r.loss}) {
      out += "," + fmt_real(v);
    }
    out += "\n";
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kMetricsHeader) throw InvalidInput("metrics: line 1: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw InvalidInput("metrics: line " + std::to_string(lineno) + ": expected 10 columns");
    try {
      MetricsRow r;
      std::size_t used = 0;
      r.step = std::stoull(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("step");
      double* fields[] = {&r.mean_logp_win, &r.mean_logp_lose, &r.leanpo_reward_win, &r.leanpo_reward_lose,
                          &r.dpo_reward_win, &r.dpo_reward_lose, &r.margin,           &r.zq_rate,
                          &r.loss};
      for (std::size_t i = 0; i < 9; ++i) {
        *fields[i] = std::stod(cells[i + 1], &used);
        if (used != cells[i + 1].size()) throw std::invalid_argument("real");
      }
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw InvalidInput("metrics: line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (lineno == 0) throw InvalidInput("metrics: empty file");
  return rows;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::vector<Series>& series) {
  const double W = 640, H = 360, left = 70, right = 170, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double span = hi - lo;
  lo -= 0.05 * span;
  hi += 0.05 * span;
  auto X = [&](std::size_t i) { return left + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : pw / 2); };
  auto Y = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::ostringstream o;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n", W, H,
                W, H);
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n" << buf;
  o << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">", left);
  o << buf << xml_escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n", left, top,
                pw, ph);
  o << buf;
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.3g</text>\n",
                  left - 6, Y(v) + 4, v);
    o << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">",
                left + pw / 2, H - 14);
  o << buf << xml_escape(x_label) << " (0.." << (n ? n - 1 : 0) << ")</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      if (!std::isfinite(series[k].values[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(i), Y(series[k].values[i]));
      pts += buf;
    }
    if (!pts.empty()) pts.pop_back();
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" fill=\"%s\">", left + pw + 10,
                  top + 16 + 18.0 * static_cast<double>(k), color);
    o << buf << xml_escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_curves(const RunRecord& run, const std::string& out_prefix) {
  if (run.rows.empty()) throw InvalidInput("emit_curves: run has no steps");
  auto column = [&](double MetricsRow::*f) {
    std::vector<double> v;
    for (const auto& r : run.rows) v.push_back(r.*f);
    return v;
  };
  std::vector<std::filesystem::path> paths;
  auto put = [&](const std::string& suffix, const std::string& text) {
    const std::filesystem::path p = out_prefix + suffix;
    write_file(p, text);
    paths.push_back(p);
  };
  put(".csv", metrics_csv(run.rows));
  put("-likelihood.svg", svg_line_chart("sequence log-likelihood (batch mean)", "step",
                                        {{"winning", column(&MetricsRow::mean_logp_win)},
                                         {"losing", column(&MetricsRow::mean_logp_lose)}}));
  put("-leanpo-reward.svg", svg_line_chart("average log-likelihood reward", "step",
                                           {{"winning", column(&MetricsRow::leanpo_reward_win)},
                                            {"losing", column(&MetricsRow::leanpo_reward_lose)},
                                            {"margin", column(&MetricsRow::margin)}}));
  put("-dpo-reward.svg", svg_line_chart("log-ratio reward vs reference", "step",
                                        {{"winning", column(&MetricsRow::dpo_reward_win)},
                                         {"losing", column(&MetricsRow::dpo_reward_lose)}}));
  put("-gate.svg", svg_line_chart("gate rate and loss", "step",
                                  {{"zq-rate", column(&MetricsRow::zq_rate)}, {"loss", column(&MetricsRow::loss)}}));
  return paths;
}

}  // namespace leanpo
