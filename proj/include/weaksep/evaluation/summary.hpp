#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weaksep/errors.hpp"

namespace weaksep::evaluation {

/// Serialized stand-in for +/- infinity.
inline constexpr double kSentinelDb = 300.0;

inline constexpr const char* kMetricNote =
    "bss metrics from length-1 orthogonal projections (no allowed-distortion filter); "
    "infinite ratios are written as +/-300 dB with capped_flag=1";
inline constexpr const char* kPercentileNote = "percentiles by linear interpolation between order statistics";

struct EvalRecord {
  std::string run_id;
  std::string mixture_id;
  int target_class = 0;
  std::string method;  // ae-signal, ae-class, vae-signal, vae-class or oracle
  double gain_db = 0.0;
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;

  bool capped() const { return !std::isfinite(sdr) || !std::isfinite(sir) || !std::isfinite(sar); }
};

inline double cap(double v) { return std::isfinite(v) ? v : (v > 0 ? kSentinelDb : -kSentinelDb); }

/// Linear interpolation between order statistics of sorted values, p in [0, 1].
inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile: no values");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return percentile(values, 0.5);
}

struct Stats {
  std::size_t count = 0;     // finite values summarized
  std::size_t excluded = 0;  // infinite sentinels left out
  bool flagged = false;      // nothing finite to summarize
  double median = 0.0, q25 = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
};

inline Stats describe(const std::vector<double>& values) {
  Stats s;
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
    else ++s.excluded;
  }
  s.count = finite.size();
  if (finite.empty()) {
    s.flagged = true;
    return s;
  }
  std::sort(finite.begin(), finite.end());
  s.median = percentile(finite, 0.5);
  s.q25 = percentile(finite, 0.25);
  s.q75 = percentile(finite, 0.75);
  s.min = finite.front();
  s.max = finite.back();
  return s;
}

inline std::string group_value(const EvalRecord& r, const std::string& key) {
  if (key == "method") return r.method;
  if (key == "target_class") return std::to_string(r.target_class);
  if (key == "run_id") return r.run_id;
  if (key == "gain_db") {
    std::ostringstream os;
    os << r.gain_db;
    return os.str();
  }
  throw std::invalid_argument("unknown group key '" + key + "'");
}

struct SummaryRow {
  std::vector<std::string> key;  // one value per group key
  std::vector<double> sdr, sir, sar;
  Stats sdr_stats, sir_stats, sar_stats;
};

struct Summary {
  std::vector<std::string> group_keys;
  std::vector<SummaryRow> rows;

  const SummaryRow& find(const std::vector<std::string>& key) const {
    for (const auto& r : rows)
      if (r.key == key) return r;
    throw std::out_of_range("summary has no group for the requested key");
  }
};

/// Groups records and describes each metric; groups appear in sorted key order.
inline Summary summarize(const std::vector<EvalRecord>& records, const std::vector<std::string>& group_keys) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  std::map<std::vector<std::string>, SummaryRow> groups;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (const auto& k : group_keys) key.push_back(group_value(r, k));
    auto& row = groups[key];
    row.key = key;
    row.sdr.push_back(r.sdr);
    row.sir.push_back(r.sir);
    row.sar.push_back(r.sar);
  }
  Summary s;
  s.group_keys = group_keys;
  for (auto& [key, row] : groups) {
    row.sdr_stats = describe(row.sdr);
    row.sir_stats = describe(row.sir);
    row.sar_stats = describe(row.sar);
    s.rows.push_back(std::move(row));
  }
  return s;
}

inline void write_records_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "# " << kMetricNote << '\n';
  out << "run_id,mixture_id,target_class,method,gain_db,sdr,sir,sar,capped_flag\n";
  for (const auto& r : records) {
    out << r.run_id << ',' << r.mixture_id << ',' << r.target_class << ',' << r.method << ',' << r.gain_db << ','
        << cap(r.sdr) << ',' << cap(r.sir) << ',' << cap(r.sar) << ',' << (r.capped() ? 1 : 0) << '\n';
  }
}

inline std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  bool header = false;
  auto uncap = [](double v, bool capped) {
    if (capped && std::abs(v) == kSentinelDb) return v > 0 ? std::numeric_limits<double>::infinity()
                                                           : -std::numeric_limits<double>::infinity();
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw DataError("malformed record line in " + path.string() + ": " + line);
    EvalRecord r;
    r.run_id = f[0];
    r.mixture_id = f[1];
    r.target_class = std::stoi(f[2]);
    r.method = f[3];
    r.gain_db = std::stod(f[4]);
    const bool capped = f[8] == "1";
    r.sdr = uncap(std::stod(f[5]), capped);
    r.sir = uncap(std::stod(f[6]), capped);
    r.sar = uncap(std::stod(f[7]), capped);
    out.push_back(r);
  }
  return out;
}

inline void write_summary_csv(const Summary& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "# " << kPercentileNote << "; " << kMetricNote << '\n';
  for (const auto& k : s.group_keys) out << k << ',';
  out << "metric,count,excluded,flagged,median,q25,q75,min,max\n";
  for (const auto& row : s.rows) {
    const std::pair<const char*, const Stats*> metrics[] = {
        {"sdr", &row.sdr_stats}, {"sir", &row.sir_stats}, {"sar", &row.sar_stats}};
    for (const auto& [name, st] : metrics) {
      for (const auto& k : row.key) out << k << ',';
      out << name << ',' << st->count << ',' << st->excluded << ',' << (st->flagged ? 1 : 0) << ',' << st->median
          << ',' << st->q25 << ',' << st->q75 << ',' << st->min << ',' << st->max << '\n';
    }
  }
}

inline nlohmann::json to_json(const Stats& s) {
  return {{"count", s.count}, {"excluded", s.excluded}, {"flagged", s.flagged}, {"median", s.median},
          {"q25", s.q25},     {"q75", s.q75},           {"min", s.min},         {"max", s.max}};
}

/// Raw per-group values plus summary statistics, for external violin plots.
inline nlohmann::json plot_data(const Summary& s) {
  nlohmann::json groups = nlohmann::json::array();
  auto capped = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(cap(x));
    return out;
  };
  for (const auto& row : s.rows) {
    nlohmann::json key = nlohmann::json::object();
    for (std::size_t i = 0; i < s.group_keys.size(); ++i) key[s.group_keys[i]] = row.key[i];
    groups.push_back({{"key", key},
                      {"values", {{"sdr", capped(row.sdr)}, {"sir", capped(row.sir)}, {"sar", capped(row.sar)}}},
                      {"summary",
                       {{"sdr", to_json(row.sdr_stats)}, {"sir", to_json(row.sir_stats)}, {"sar", to_json(row.sar_stats)}}}});
  }
  return {{"note", std::string(kMetricNote) + "; " + kPercentileNote}, {"group_keys", s.group_keys}, {"groups", groups}};
}

inline void write_plot_data(const Summary& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << plot_data(s).dump(2) << '\n';
}

}  // namespace weaksep::evaluation
