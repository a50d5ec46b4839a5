#pragma once

// Metric export: per-step CSV records and JSON summaries.
//
// Requires nlohmann/json.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcbf/barrier.hpp"
#include "rcbf/sim.hpp"

namespace rcbf {

inline constexpr const char* kMetricsHeader = "t,min_h,wct_s,max_alter";

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// One line per control step. With `timing` false the wall-clock column is
/// written as 0 so that repeated runs produce byte-identical files.
inline void write_metrics_csv(std::ostream& os, const RunMetrics& m, bool timing = true) {
  os << kMetricsHeader << '\n';
  for (std::size_t k = 0; k < m.t.size(); ++k) {
    os << detail::fmt_double(m.t[k]) << ',' << detail::fmt_double(m.min_h[k]) << ','
       << detail::fmt_double(timing ? m.wct[k] : 0.0) << ',' << detail::fmt_double(m.max_alter[k]) << '\n';
  }
}

/// Two-column (t, min_h) series for plotting.
inline void write_trace_csv(std::ostream& os, const RunMetrics& m) {
  os << "t,min_h\n";
  for (std::size_t k = 0; k < m.t.size(); ++k)
    os << detail::fmt_double(m.t[k]) << ',' << detail::fmt_double(m.min_h[k]) << '\n';
}

inline nlohmann::json summary_json(const ExperimentSummary& s) {
  return {{"avg_wct_ms", s.avg_wct_ms},
          {"var_wct_ms2", s.var_wct_ms2},
          {"avg_freq_hz", s.avg_freq_hz},
          {"violation_time_s", s.violation_time_s},
          {"goal_completion", s.goal_completion}};
}

inline nlohmann::json summary_json(const RunMetrics& m) {
  return summary_json(summarize(std::span<const RunMetrics>(&m, 1)));
}

/// Side-by-side robust vs non-robust report with deltas.
inline nlohmann::json compare_json(const ExperimentSummary& robust, const ExperimentSummary& non_robust) {
  nlohmann::json j;
  j["robust"] = summary_json(robust);
  j["non_robust"] = summary_json(non_robust);
  j["robust"]["worst_min_h"] = robust.worst_min_h;
  j["non_robust"]["worst_min_h"] = non_robust.worst_min_h;
  j["delta"] = {{"avg_wct_ms", robust.avg_wct_ms - non_robust.avg_wct_ms},
                {"avg_freq_hz", robust.avg_freq_hz - non_robust.avg_freq_hz},
                {"violation_time_s", robust.violation_time_s - non_robust.violation_time_s}};
  return j;
}

struct MetricRecord {
  double t;
  double min_h;
  double wct_s;
  double max_alter;
};

inline std::vector<MetricRecord> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) throw std::runtime_error("metrics csv: bad header");
  std::vector<MetricRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    MetricRecord r{};
    char c1, c2, c3;
    std::istringstream ls(line);
    if (!(ls >> r.t >> c1 >> r.min_h >> c2 >> r.wct_s >> c3 >> r.max_alter) || c1 != ',' || c2 != ',' || c3 != ',')
      throw std::runtime_error("metrics csv: malformed record '" + line + "'");
    out.push_back(r);
  }
  return out;
}

/// Recomputes the step-derived summary fields from CSV records. dt is the
/// record spacing; goal completion is not recoverable from records.
inline ExperimentSummary summary_from_records(const std::vector<MetricRecord>& recs, double dt) {
  RunMetrics m;
  m.dt = dt;
  std::size_t violated = 0;
  for (const auto& r : recs) {
    m.t.push_back(r.t);
    m.min_h.push_back(r.min_h);
    m.wct.push_back(r.wct_s);
    m.max_alter.push_back(r.max_alter);
    if (r.min_h < 0.0) ++violated;
  }
  m.violation_time = static_cast<double>(violated) * dt;
  return summarize(std::span<const RunMetrics>(&m, 1));
}

/// First-step constraint breakdown: b = -alpha(h) - margin per row.
inline void write_constraint_dump(std::ostream& os, const ConstraintSet& cs) {
  os << "row,i,j,hull,h,class_k,margin,b\n";
  for (Eigen::Index r = 0; r < cs.rows(); ++r) {
    const RowInfo& info = cs.info[static_cast<std::size_t>(r)];
    os << r << ',' << info.i << ',' << info.j << ',' << info.hull << ',' << detail::fmt_double(info.h) << ','
       << detail::fmt_double(info.class_k) << ',' << detail::fmt_double(info.margin) << ','
       << detail::fmt_double(cs.b(r)) << '\n';
  }
}

}  // namespace rcbf
