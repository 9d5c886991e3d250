#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sortrl/error.hpp"
#include "sortrl/run_io.hpp"
#include "sortrl/stats.hpp"

namespace sortrl {

struct RunRecord {
  std::filesystem::path dir;
  RunManifest manifest;
  MetricsReport metrics;
};

// Finds completed runs (a manifest plus metrics.json) under root, including
// root itself. Records are sorted by (length, dim, seed, path) so downstream
// aggregation does not depend on directory iteration order.
inline std::vector<RunRecord> scan_runs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> candidates;
  if (std::filesystem::is_directory(root)) {
    candidates.push_back(root);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
      if (entry.is_directory()) candidates.push_back(entry.path());
  }
  std::vector<RunRecord> records;
  for (const auto& dir : candidates) {
    if (!std::filesystem::exists(dir / kManifestFile) ||
        !std::filesystem::exists(dir / kMetricsFile))
      continue;
    RunRecord rec;
    rec.dir = dir;
    rec.manifest = read_manifest(dir);
    if (rec.manifest.status != "complete") continue;
    std::ifstream in(dir / kMetricsFile);
    try {
      rec.metrics = metrics_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError("bad metrics.json in " + dir.string() + ": " + e.what());
    }
    require(rec.metrics.length == rec.manifest.length,
            "metrics/manifest length mismatch in " + dir.string());
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tuple(a.manifest.length, a.manifest.embed_dim, a.manifest.seed,
                      a.dir.string()) < std::tuple(b.manifest.length, b.manifest.embed_dim,
                                                   b.manifest.seed, b.dir.string());
  });
  return records;
}

// Mean with a normal-approximation 95% CI; the CI is absent below two seeds.
struct MeanCI {
  double mean = 0.0;
  std::optional<double> ci95;
};

inline MeanCI summarize(const std::vector<double>& xs) {
  MeanCI out;
  out.mean = mean(xs);
  if (xs.size() >= 2) out.ci95 = ci95_halfwidth(xs);
  return out;
}

struct CellSummary {
  int length = 0;
  int embed_dim = 0;
  long long n = 0;
  MeanCI accuracy, non_inversion, top1, top2, trap_rate;
};

struct ScatterPoint {
  int length = 0, embed_dim = 0;
  std::uint64_t seed = 0;
  double non_inversion = 0.0, top1 = 0.0;
};

struct HighAccuracyGroup {
  int length = 0;
  long long n = 0;
  std::vector<double> top_k_mean;  // index k-1
};

struct AggregateReport {
  std::vector<CellSummary> cells;            // by (length, embed_dim)
  std::vector<ScatterPoint> scatter;         // one point per run
  std::optional<LinearFit> non_inversion_vs_top1;
  double high_accuracy_threshold = 0.99;
  std::vector<HighAccuracyGroup> high_accuracy;  // per length, over runs meeting the threshold
};

// Aggregates runs into the standard report: per-(length, dim) metric curves
// over every run, the non-inversion vs top-1 regression over every run, and
// top-k rates over the high-accuracy population (threshold parameterized;
// the reference population is "almost fully accurate" agents).
inline AggregateReport aggregate_runs(const std::vector<RunRecord>& records,
                                      double high_accuracy_threshold = 0.99) {
  AggregateReport report;
  report.high_accuracy_threshold = high_accuracy_threshold;

  std::map<std::pair<int, int>, std::vector<const RunRecord*>> by_cell;
  for (const auto& rec : records)
    by_cell[{rec.manifest.length, rec.manifest.embed_dim}].push_back(&rec);
  for (const auto& [key, runs] : by_cell) {
    CellSummary cell;
    cell.length = key.first;
    cell.embed_dim = key.second;
    cell.n = static_cast<long long>(runs.size());
    auto collect = [&](auto getter) {
      std::vector<double> xs;
      xs.reserve(runs.size());
      for (const auto* r : runs) xs.push_back(getter(r->metrics));
      return summarize(xs);
    };
    cell.accuracy = collect([](const MetricsReport& m) { return m.accuracy; });
    cell.non_inversion = collect([](const MetricsReport& m) { return m.non_inversion_proportion; });
    cell.top1 = collect([](const MetricsReport& m) { return m.top_k_hit_rates.at(0); });
    cell.top2 = collect([](const MetricsReport& m) { return m.top_k_hit_rates.at(1); });
    cell.trap_rate = collect([](const MetricsReport& m) { return m.greedy_trap_rate; });
    report.cells.push_back(cell);
  }

  std::vector<double> xs, ys;
  for (const auto& rec : records) {
    ScatterPoint p;
    p.length = rec.manifest.length;
    p.embed_dim = rec.manifest.embed_dim;
    p.seed = rec.manifest.seed;
    p.non_inversion = rec.metrics.non_inversion_proportion;
    p.top1 = rec.metrics.top_k_hit_rates.at(0);
    report.scatter.push_back(p);
    xs.push_back(p.non_inversion);
    ys.push_back(p.top1);
  }
  if (xs.size() >= 2) {
    try {
      report.non_inversion_vs_top1 = least_squares(xs, ys);
    } catch (const ContractViolation&) {
      // No variation in x; the fit is undefined and stays absent.
    }
  }

  std::map<int, std::vector<const RunRecord*>> high_by_length;
  for (const auto& rec : records)
    if (rec.metrics.accuracy >= high_accuracy_threshold)
      high_by_length[rec.manifest.length].push_back(&rec);
  for (const auto& [length, runs] : high_by_length) {
    HighAccuracyGroup group;
    group.length = length;
    group.n = static_cast<long long>(runs.size());
    group.top_k_mean.assign(static_cast<std::size_t>(length - 1), 0.0);
    for (const auto* r : runs)
      for (std::size_t k = 0; k < group.top_k_mean.size(); ++k)
        group.top_k_mean[k] += r->metrics.top_k_hit_rates.at(k);
    for (double& v : group.top_k_mean) v /= static_cast<double>(group.n);
    report.high_accuracy.push_back(std::move(group));
  }
  return report;
}

namespace detail {

inline std::string csv_field(const MeanCI& m) {
  std::string s = std::to_string(m.mean) + ",";
  if (m.ci95) s += std::to_string(*m.ci95);
  return s;
}

}  // namespace detail

// Writes metrics_by_dim.csv, scatter.csv and summary.json into out_dir and
// prints a human-readable digest to `text`.
inline void write_report(const AggregateReport& report, const std::filesystem::path& out_dir,
                         std::ostream& text) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "metrics_by_dim.csv", std::ios::trunc);
    require(csv.good(), "cannot write metrics_by_dim.csv");
    csv << "length,embed_dim,n,accuracy_mean,accuracy_ci95,non_inversion_mean,"
           "non_inversion_ci95,top1_mean,top1_ci95,top2_mean,top2_ci95,trap_rate_mean,"
           "trap_rate_ci95\n";
    for (const auto& c : report.cells)
      csv << c.length << ',' << c.embed_dim << ',' << c.n << ',' << detail::csv_field(c.accuracy)
          << ',' << detail::csv_field(c.non_inversion) << ',' << detail::csv_field(c.top1) << ','
          << detail::csv_field(c.top2) << ',' << detail::csv_field(c.trap_rate) << '\n';
  }
  {
    std::ofstream csv(out_dir / "scatter.csv", std::ios::trunc);
    require(csv.good(), "cannot write scatter.csv");
    csv << "length,embed_dim,seed,non_inversion_proportion,top1_hit_rate\n";
    for (const auto& p : report.scatter)
      csv << p.length << ',' << p.embed_dim << ',' << p.seed << ',' << p.non_inversion << ','
          << p.top1 << '\n';
  }
  {
    nlohmann::json j;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : report.cells) {
      nlohmann::json cell{{"length", c.length}, {"embed_dim", c.embed_dim}, {"n", c.n}};
      auto put = [&cell](const char* name, const MeanCI& m) {
        cell[name] = {{"mean", m.mean}};
        if (m.ci95) cell[name]["ci95"] = *m.ci95;
      };
      put("accuracy", c.accuracy);
      put("non_inversion_proportion", c.non_inversion);
      put("top1_hit_rate", c.top1);
      put("top2_hit_rate", c.top2);
      put("greedy_trap_rate", c.trap_rate);
      j["cells"].push_back(cell);
    }
    if (report.non_inversion_vs_top1) {
      const auto& fit = *report.non_inversion_vs_top1;
      j["non_inversion_vs_top1"] = {{"slope", fit.slope},
                                    {"intercept", fit.intercept},
                                    {"r2", fit.r2},
                                    {"n", fit.n}};
    } else {
      j["non_inversion_vs_top1"] = nullptr;
    }
    j["high_accuracy"] = {{"threshold", report.high_accuracy_threshold},
                          {"groups", nlohmann::json::array()}};
    for (const auto& g : report.high_accuracy) {
      nlohmann::json top_k;
      for (std::size_t k = 0; k < g.top_k_mean.size(); ++k)
        top_k[std::to_string(k + 1)] = g.top_k_mean[k];
      j["high_accuracy"]["groups"].push_back(
          {{"length", g.length}, {"n", g.n}, {"top_k_mean", top_k}});
    }
    std::ofstream out(out_dir / "summary.json", std::ios::trunc);
    require(out.good(), "cannot write summary.json");
    out << j.dump(2) << '\n';
  }

  text << "runs aggregated: " << report.scatter.size() << "\n";
  text << "length dim    n  accuracy  non_inv   top1     top2     trap\n";
  for (const auto& c : report.cells) {
    char line[160];
    std::snprintf(line, sizeof(line), "%4d %5d %4lld  %.4f    %.4f    %.4f   %.4f   %.4f\n",
                  c.length, c.embed_dim, c.n, c.accuracy.mean, c.non_inversion.mean, c.top1.mean,
                  c.top2.mean, c.trap_rate.mean);
    text << line;
  }
  if (report.non_inversion_vs_top1) {
    const auto& fit = *report.non_inversion_vs_top1;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "top1 ~ non_inversion: slope=%.4f intercept=%.4f r2=%.4f (n=%lld)\n", fit.slope,
                  fit.intercept, fit.r2, fit.n);
    text << line;
  }
  for (const auto& g : report.high_accuracy) {
    text << "high-accuracy (>= " << report.high_accuracy_threshold << ") length " << g.length
         << ": n=" << g.n << " top-k:";
    for (double v : g.top_k_mean) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), " %.4f", v);
      text << buf;
    }
    text << "\n";
  }
}

}  // namespace sortrl
