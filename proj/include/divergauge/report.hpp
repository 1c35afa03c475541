#pragma once

// Markdown and CSV renderings of evaluation records.

#include "divergauge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace divergauge {

// Linear interpolation between closest ranks, q in [0, 1].
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty series");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct SeriesSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

inline SeriesSummary summarize(const std::vector<double>& xs) {
  SeriesSummary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  s.median = quantile(xs, 0.5);
  s.p25 = quantile(xs, 0.25);
  s.p75 = quantile(xs, 0.75);
  return s;
}

namespace detail {

inline std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fmt_p(double p) {
  char buf[64];
  if (p != 0.0 && p < 1e-4) std::snprintf(buf, sizeof buf, "%.2e", p);
  else std::snprintf(buf, sizeof buf, "%.4f", p);
  return buf;
}

// Numeric param, or NaN when absent or null (a zero-variance t is stored as null).
inline double param(const nlohmann::json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_number()) return std::nan("");
  return params[key].get<double>();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

// Configuration labels in first-seen order.
inline std::vector<std::string> config_order(const std::vector<ReportRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (r.scope != "paired" && std::find(out.begin(), out.end(), r.config) == out.end()) out.push_back(r.config);
  return out;
}

}  // namespace detail

inline void render_markdown(std::ostream& os, const std::vector<ReportRecord>& records,
                            const std::vector<std::string>& notices = {}) {
  const auto configs = detail::config_order(records);
  os << "# Diversity report\n\n";

  os << "## Per-prompt metrics\n\n"
     << "Median with the 25th-75th percentile band over prompts.\n\n"
     << "| metric | config | prompts | mean | median | p25 | p75 |\n"
     << "|---|---|---:|---:|---:|---:|---:|\n";
  for (const auto& m : per_prompt_metrics())
    for (const auto& c : configs) {
      std::vector<double> xs;
      for (const auto& r : records)
        if (r.scope == "per_prompt" && r.metric == m && r.config == c) xs.push_back(r.value);
      if (xs.empty()) continue;
      const auto s = summarize(xs);
      os << "| " << m << " | " << c << " | " << s.n << " | " << detail::fmt(s.mean) << " | "
         << detail::fmt(s.median) << " | " << detail::fmt(s.p25) << " | " << detail::fmt(s.p75) << " |\n";
    }

  bool any_across = false;
  for (const auto& r : records) any_across |= r.scope == "across_prompts";
  if (any_across) {
    os << "\n## Across-prompt metrics\n\n| metric | config | value | notes |\n|---|---|---:|---|\n";
    for (const auto& m : across_prompt_metrics())
      for (const auto& r : records)
        if (r.scope == "across_prompts" && r.metric == m) {
          std::string note;
          if (r.params.contains("mode")) note = r.params["mode"].get<std::string>();
          if (r.params.value("degenerate", false)) note += (note.empty() ? "" : ", ") + std::string("degenerate");
          os << "| " << m << " | " << r.config << " | " << detail::fmt(r.value) << " | " << note << " |\n";
        }
  }

  bool any_paired = false;
  for (const auto& r : records) any_paired |= r.scope == "paired";
  if (any_paired) {
    os << "\n## Paired one-tailed t-tests\n\n| metric | hypothesis | n | mean diff | t | p |\n"
       << "|---|---|---:|---:|---:|---:|\n";
    for (const auto& r : records) {
      if (r.scope != "paired") continue;
      os << "| " << r.metric.substr(r.metric.rfind("ttest_", 0) == 0 ? 6 : 0) << " | " << r.config << " | "
         << r.params.value("n", 0) << " | " << detail::fmt(detail::param(r.params, "mean_difference")) << " | "
         << (std::isnan(detail::param(r.params, "t")) && r.params.value("degenerate", false)
                 ? std::string(detail::param(r.params, "mean_difference") > 0 ? "inf" : "-inf")
                 : detail::fmt(detail::param(r.params, "t"), 3))
         << " | " << detail::fmt_p(r.value)
         << (r.params.value("degenerate", false) ? " (zero variance)" : "") << " |\n";
    }
  }

  std::map<std::string, std::map<std::string, std::map<std::string, double>>> raw;  // metric -> prompt -> config
  for (const auto& r : records)
    if (r.scope == "per_prompt") raw[r.metric][r.prompt_id][r.config] = r.value;
  for (const auto& m : per_prompt_metrics()) {
    auto it = raw.find(m);
    if (it == raw.end()) continue;
    os << "\n## Raw per-prompt " << m << "\n\n| prompt |";
    for (const auto& c : configs) os << ' ' << c << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < configs.size(); ++i) os << "---:|";
    os << '\n';
    for (const auto& [pid, row] : it->second) {
      os << "| " << pid << " |";
      for (const auto& c : configs) {
        auto v = row.find(c);
        os << ' ' << (v == row.end() ? std::string("") : detail::fmt(v->second)) << " |";
      }
      os << '\n';
    }
  }

  if (!notices.empty()) {
    os << "\n## Notices\n\n";
    for (const auto& n : notices) os << "- " << n << '\n';
  }
}

inline void render_csv(std::ostream& os, const std::vector<ReportRecord>& records) {
  os << "metric,scope,config,prompt_id,value\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    os << detail::csv_field(r.metric) << ',' << r.scope << ',' << detail::csv_field(r.config) << ','
       << detail::csv_field(r.prompt_id) << ',' << buf << '\n';
  }
}

}  // namespace divergauge
