#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace credit::harness {

/// Shortest decimal that round-trips, independent of locale. Non-finite values print as nan, inf, -inf.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

inline std::string format_number(std::uint64_t v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct MetricRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string algo;
  std::string env;
  std::uint64_t step = 0;
  std::string metric;
  double value = 0.0;
};

inline constexpr const char* kMetricHeader = "run_id,seed,algo,env,step,metric,value";
inline constexpr const char* kAggregateHeader = "run_id,algo,env,step,metric,mean,stderr,n";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline void write_metric_rows(std::ostream& os, const std::vector<MetricRow>& rows, bool header = true) {
  if (header) os << kMetricHeader << '\n';
  for (const auto& r : rows) {
    os << detail::csv_field(r.run_id) << ',' << r.seed << ',' << detail::csv_field(r.algo) << ',' << detail::csv_field(r.env)
       << ',' << r.step << ',' << detail::csv_field(r.metric) << ',' << format_number(r.value) << '\n';
  }
}

struct AggregateRow {
  std::string run_id;
  std::string algo;
  std::string env;
  std::uint64_t step = 0;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n = 0;
};

/// Mean and standard error over seeds for every (run_id, algo, env, step, metric), in key order.
inline std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::uint64_t>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.run_id, r.algo, r.env, r.metric, r.step}].push_back(r.value);
  std::vector<AggregateRow> out;
  out.reserve(groups.size());
  for (const auto& [k, vals] : groups) {
    AggregateRow a;
    std::tie(a.run_id, a.algo, a.env, a.metric, a.step) = k;
    a.n = vals.size();
    double sum = 0.0;
    for (double v : vals) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    if (a.n > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - a.mean) * (v - a.mean);
      a.stderr_ = std::sqrt(ss / static_cast<double>(a.n - 1)) / std::sqrt(static_cast<double>(a.n));
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_aggregate_rows(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    os << detail::csv_field(a.run_id) << ',' << detail::csv_field(a.algo) << ',' << detail::csv_field(a.env) << ','
       << a.step << ',' << detail::csv_field(a.metric) << ',' << format_number(a.mean) << ',' << format_number(a.stderr_)
       << ',' << a.n << '\n';
  }
}

/// Last step's aggregate for each (run_id, metric).
inline std::map<std::pair<std::string, std::string>, AggregateRow> final_values(const std::vector<AggregateRow>& rows) {
  std::map<std::pair<std::string, std::string>, AggregateRow> out;
  for (const auto& a : rows) {
    auto key = std::make_pair(a.run_id, a.metric);
    auto it = out.find(key);
    if (it == out.end() || a.step >= it->second.step) out[key] = a;
  }
  return out;
}

}  // namespace credit::harness
