#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sortrl/error.hpp"
#include "sortrl/run_io.hpp"

namespace sortrl {

// Grid sweep description, parsed from a `key = value` file with
// comma-separated lists. Defaults are the desk-scale experiment: dims
// {2,4,8,16,32} x lengths {4,5} x 5 seeds at 300k steps.
struct SweepSpec {
  std::vector<int> dims{2, 4, 8, 16, 32};
  std::vector<int> lengths{4, 5};
  int seeds = 5;  // seeds 0 .. seeds-1
  long long timesteps = 300000;
  int num_layers = 1;
  int max_steps = 1000;
  int workers = 1;
  std::filesystem::path out_dir = "runs";

  void validate() const {
    require(!dims.empty() && !lengths.empty(), "sweep needs at least one dim and length");
    require(seeds >= 1, "sweep needs at least one seed");
    require(timesteps >= 1, "sweep timesteps must be positive");
    require(workers >= 1, "sweep workers must be positive");
    for (int l : lengths)
      require(l >= kMinLength && l <= kMaxLength, "sweep length out of [3, 10]");
    for (int d : dims) require(d >= 1, "sweep dims must be positive");
  }

  static SweepSpec parse(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in.good()) throw DataFormatError("cannot open sweep spec: " + file.string());
    SweepSpec spec;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const auto sep = line.find(" = ");
      if (sep == std::string::npos)
        throw DataFormatError("sweep spec line " + std::to_string(line_no) +
                              " is not `key = value`: " + line);
      const std::string key = line.substr(0, sep);
      const std::string value = line.substr(sep + 3);
      try {
        if (key == "dims")
          spec.dims = parse_int_list(value);
        else if (key == "lengths")
          spec.lengths = parse_int_list(value);
        else if (key == "seeds")
          spec.seeds = std::stoi(value);
        else if (key == "timesteps")
          spec.timesteps = std::stoll(value);
        else if (key == "layers")
          spec.num_layers = std::stoi(value);
        else if (key == "max_steps")
          spec.max_steps = std::stoi(value);
        else if (key == "workers")
          spec.workers = std::stoi(value);
        else if (key == "out")
          spec.out_dir = value;
        else
          throw DataFormatError("unknown sweep spec key: " + key);
      } catch (const DataFormatError&) {
        throw;
      } catch (const std::exception&) {
        throw DataFormatError("malformed value for sweep key " + key + ": " + value);
      }
    }
    return spec;
  }

 private:
  static std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    if (out.empty()) throw DataFormatError("empty list value: " + s);
    return out;
  }
};

inline std::string cell_name(int length, int dim, std::uint64_t seed) {
  return "len" + std::to_string(length) + "_dim" + std::to_string(dim) + "_seed" +
         std::to_string(seed);
}

struct CellOutcome {
  int length = 0;
  int dim = 0;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  enum class Status { trained, skipped, failed } status = Status::failed;
  bool diverged = false;
  std::string error;
};

namespace detail {

inline CellOutcome run_cell(const SweepSpec& spec, int length, int dim, std::uint64_t seed) {
  CellOutcome outcome;
  outcome.length = length;
  outcome.dim = dim;
  outcome.seed = seed;
  outcome.dir = spec.out_dir / cell_name(length, dim, seed);
  const auto& dir = outcome.dir;

  ProbeConfig probe_cfg;
  probe_cfg.sample_seed = seed;
  try {
    if (std::filesystem::exists(dir / kManifestFile)) {
      const RunManifest m = read_manifest(dir);
      if (m.status == "complete" && std::filesystem::exists(dir / kMetricsFile)) {
        outcome.status = CellOutcome::Status::skipped;
        return outcome;
      }
      if (m.status == "complete") {
        // Training finished, probing did not: probe the final checkpoint.
        const auto loaded = load_checkpoint(final_checkpoint(dir));
        run_probe_to_dir(loaded.params, loaded.meta.seed, probe_cfg, dir);
        outcome.status = CellOutcome::Status::trained;
        return outcome;
      }
      if (m.status == "diverged") {
        outcome.status = CellOutcome::Status::failed;
        outcome.diverged = true;
        outcome.error = "diverged in a previous sweep";
        return outcome;
      }
      // Stale `running` state from an interrupted process: start over.
      std::filesystem::remove_all(dir);
    }
    RunSpec rs;
    rs.model.length = length;
    rs.model.embed_dim = dim;
    rs.model.num_layers = spec.num_layers;
    rs.env.length = length;
    rs.env.max_steps = spec.max_steps;
    rs.env.seed = seed;
    rs.ppo.total_timesteps = spec.timesteps;
    rs.ppo.seed = seed;
    const TrainResult result = run_training_to_dir(rs, dir);
    run_probe_to_dir(result.params, seed, probe_cfg, dir);
    outcome.status = CellOutcome::Status::trained;
  } catch (const NumericalDivergence& e) {
    outcome.status = CellOutcome::Status::failed;
    outcome.diverged = true;
    outcome.error = e.what();
  } catch (const std::exception& e) {
    outcome.status = CellOutcome::Status::failed;
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace detail

// Runs every (length, dim, seed) cell, skipping the ones already complete,
// spreading cells over `workers` threads. Per-cell failures are recorded and
// do not stop the sweep.
inline std::vector<CellOutcome> run_sweep(const SweepSpec& spec, std::ostream& log) {
  spec.validate();
  std::filesystem::create_directories(spec.out_dir);

  struct Cell {
    int length, dim;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int length : spec.lengths)
    for (int dim : spec.dims)
      for (int seed = 0; seed < spec.seeds; ++seed)
        cells.push_back({length, dim, static_cast<std::uint64_t>(seed)});

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& c = cells[i];
      {
        std::lock_guard<std::mutex> guard(log_mutex);
        log << "[sweep] start " << cell_name(c.length, c.dim, c.seed) << '\n' << std::flush;
      }
      outcomes[i] = detail::run_cell(spec, c.length, c.dim, c.seed);
      {
        std::lock_guard<std::mutex> guard(log_mutex);
        const auto& o = outcomes[i];
        log << "[sweep] "
            << (o.status == CellOutcome::Status::trained
                    ? "done "
                    : o.status == CellOutcome::Status::skipped ? "skip " : "FAIL ")
            << cell_name(c.length, c.dim, c.seed);
        if (!o.error.empty()) log << " (" << o.error << ')';
        log << '\n' << std::flush;
      }
    }
  };

  const int n_workers = std::min<int>(spec.workers, static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return outcomes;
}

}  // namespace sortrl
