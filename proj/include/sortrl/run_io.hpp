#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sortrl/checkpoint.hpp"
#include "sortrl/error.hpp"
#include "sortrl/model.hpp"
#include "sortrl/ppo.hpp"
#include "sortrl/probe.hpp"

namespace sortrl {

inline constexpr int kRunFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest";
inline constexpr const char* kTrainLogFile = "trainlog.jsonl";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kCheckpointDir = "checkpoints";
inline constexpr const char* kTraceDir = "traces";

// Everything needed to reproduce a run; written before training starts and
// finalized (status) when it ends. Deliberately free of wall-clock data so
// identical configs produce byte-identical directories.
struct RunManifest {
  int format_version = kRunFormatVersion;
  int length = 6;
  int embed_dim = 16;
  int num_layers = 1;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  long long timesteps = 0;
  std::string status = "running";  // running | complete | diverged
};

inline void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m) {
  std::ofstream out(run_dir / kManifestFile, std::ios::trunc);
  require(out.good(), "cannot write manifest in " + run_dir.string());
  out << "format_version = " << m.format_version << '\n'
      << "length = " << m.length << '\n'
      << "embed_dim = " << m.embed_dim << '\n'
      << "num_layers = " << m.num_layers << '\n'
      << "max_steps = " << m.max_steps << '\n'
      << "seed = " << m.seed << '\n'
      << "timesteps = " << m.timesteps << '\n'
      << "status = " << m.status << '\n';
}

inline RunManifest read_manifest(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / kManifestFile);
  if (!in.good()) throw DataFormatError("missing manifest in " + run_dir.string());
  std::map<std::string, std::string> fields;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find(" = ");
    if (sep == std::string::npos) throw DataFormatError("malformed manifest line: " + line);
    fields[line.substr(0, sep)] = line.substr(sep + 3);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataFormatError("manifest missing key: " + key);
    return it->second;
  };
  RunManifest m;
  try {
    m.format_version = std::stoi(field("format_version"));
    if (m.format_version != kRunFormatVersion)
      throw DataFormatError("unsupported manifest format_version " + field("format_version"));
    m.length = std::stoi(field("length"));
    m.embed_dim = std::stoi(field("embed_dim"));
    m.num_layers = std::stoi(field("num_layers"));
    m.max_steps = std::stoi(field("max_steps"));
    m.seed = std::stoull(field("seed"));
    m.timesteps = std::stoll(field("timesteps"));
  } catch (const DataFormatError&) {
    throw;
  } catch (const std::exception&) {
    throw DataFormatError("manifest contains a malformed number in " + run_dir.string());
  }
  m.status = field("status");
  return m;
}

inline nlohmann::json to_json(const TrainLogRecord& r) {
  return {{"update", r.update},
          {"global_step", r.global_step},
          {"policy_loss", r.policy_loss},
          {"value_loss", r.value_loss},
          {"entropy", r.entropy},
          {"approx_kl", r.approx_kl},
          {"clip_fraction", r.clip_fraction},
          {"episodes", r.episodes},
          {"mean_episode_return", r.mean_episode_return},
          {"mean_episode_length", r.mean_episode_length}};
}

inline TrainLogRecord train_log_record_from_json(const nlohmann::json& j) {
  TrainLogRecord r;
  r.update = j.at("update").get<long long>();
  r.global_step = j.at("global_step").get<long long>();
  r.policy_loss = j.at("policy_loss").get<double>();
  r.value_loss = j.at("value_loss").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.approx_kl = j.at("approx_kl").get<double>();
  r.clip_fraction = j.at("clip_fraction").get<double>();
  r.episodes = j.at("episodes").get<long long>();
  r.mean_episode_return = j.at("mean_episode_return").get<double>();
  r.mean_episode_length = j.at("mean_episode_length").get<double>();
  return r;
}

inline std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / kTrainLogFile);
  if (!in.good()) throw DataFormatError("missing trainlog.jsonl in " + run_dir.string());
  std::vector<TrainLogRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(train_log_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError(std::string("bad trainlog record: ") + e.what());
    }
  }
  return records;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir,
                                             long long step) {
  return run_dir / kCheckpointDir / ("step_" + std::to_string(step));
}

// All checkpoints in a run, ordered by step.
inline std::vector<std::pair<long long, std::filesystem::path>> list_checkpoints(
    const std::filesystem::path& run_dir) {
  std::vector<std::pair<long long, std::filesystem::path>> found;
  const auto dir = run_dir / kCheckpointDir;
  if (!std::filesystem::is_directory(dir)) return found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0) continue;
    try {
      found.emplace_back(std::stoll(name.substr(5)), entry.path());
    } catch (const std::exception&) {
      throw DataFormatError("unparseable checkpoint name: " + name);
    }
  }
  std::sort(found.begin(), found.end());
  return found;
}

inline std::filesystem::path final_checkpoint(const std::filesystem::path& run_dir) {
  const auto all = list_checkpoints(run_dir);
  if (all.empty()) throw DataFormatError("no checkpoints under " + run_dir.string());
  return all.back().second;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r, int embed_dim, int num_layers,
                                      std::uint64_t seed, const ProbeConfig& cfg) {
  nlohmann::json top_k;
  for (std::size_t k = 0; k < r.top_k_hit_rates.size(); ++k)
    top_k[std::to_string(k + 1)] = r.top_k_hit_rates[k];
  return {{"length", r.length},
          {"embed_dim", embed_dim},
          {"num_layers", num_layers},
          {"seed", seed},
          {"weight_source", to_string(cfg.source)},
          {"accuracy", r.accuracy},
          {"non_inversion_proportion", r.non_inversion_proportion},
          {"top_k_hit_rates", top_k},
          {"sign_convention", to_string(r.sign_convention)},
          {"greedy_trap_rate", r.greedy_trap_rate},
          {"n_permutations_evaluated", r.n_permutations_evaluated}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.length = j.at("length").get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.non_inversion_proportion = j.at("non_inversion_proportion").get<double>();
  r.greedy_trap_rate = j.at("greedy_trap_rate").get<double>();
  r.n_permutations_evaluated = j.at("n_permutations_evaluated").get<long long>();
  r.sign_convention = j.at("sign_convention").get<std::string>() == "most_positive"
                          ? SignConvention::most_positive
                          : SignConvention::most_negative;
  const auto& top_k = j.at("top_k_hit_rates");
  r.top_k_hit_rates.assign(top_k.size(), 0.0);
  for (auto it = top_k.begin(); it != top_k.end(); ++it) {
    const std::size_t k = static_cast<std::size_t>(std::stoul(it.key()));
    require(k >= 1 && k <= r.top_k_hit_rates.size(), "top_k key out of range");
    r.top_k_hit_rates[k - 1] = it.value().get<double>();
  }
  return r;
}

inline void write_trace_csv(const std::filesystem::path& run_dir, const TraceExport& trace) {
  const auto dir = run_dir / kTraceDir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "heatmap.csv", std::ios::trunc);
    require(out.good(), "cannot write heatmap.csv");
    out << "row,col,weight\n";
    out.precision(9);
    for (int i = 0; i < trace.length; ++i)
      for (int j = 0; j < trace.length; ++j)
        out << i << ',' << j << ',' << trace.heatmap.at(i, j) << '\n';
  }
  {
    std::ofstream out(dir / "violin.csv", std::ios::trunc);
    require(out.good(), "cannot write violin.csv");
    out << "token_id,weight\n";
    out.precision(9);
    for (std::size_t t = 0; t < trace.violin.size(); ++t)
      for (double w : trace.violin[t]) out << (t + 1) << ',' << w << '\n';
  }
}

// Probes a parameter snapshot and persists metrics.json (+ traces/). The
// metrics file repeats the model identity so downstream reporting never
// needs extra flags.
inline MetricsReport run_probe_to_dir(const ModelParams& params, std::uint64_t seed,
                                      const ProbeConfig& cfg,
                                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const MetricsReport report = probe_agent(params, cfg);
  {
    std::ofstream out(out_dir / kMetricsFile, std::ios::trunc);
    require(out.good(), "cannot write metrics.json in " + out_dir.string());
    out << metrics_to_json(report, params.cfg.embed_dim, params.cfg.num_layers, seed, cfg)
             .dump(2)
        << '\n';
  }
  write_trace_csv(out_dir, extract_trace_data(params, cfg));
  return report;
}

struct RunSpec {
  ModelConfig model;
  EnvConfig env;
  PPOConfig ppo;
};

// Trains into a run directory: manifest first (status running), a trainlog
// record per update, checkpoints at every 10% of total_timesteps, manifest
// finalized to complete — or diverged, with earlier checkpoints retained,
// when optimization hits non-finite numbers.
inline TrainResult run_training_to_dir(const RunSpec& spec, const std::filesystem::path& dir) {
  require(!std::filesystem::exists(dir / kManifestFile),
          "refusing to overwrite an existing run at " + dir.string());
  std::filesystem::create_directories(dir / kCheckpointDir);

  RunManifest manifest;
  manifest.length = spec.model.length;
  manifest.embed_dim = spec.model.embed_dim;
  manifest.num_layers = spec.model.num_layers;
  manifest.max_steps = spec.env.max_steps;
  manifest.seed = spec.ppo.seed;
  manifest.timesteps = spec.ppo.total_timesteps;
  write_manifest(dir, manifest);

  std::ofstream log(dir / kTrainLogFile, std::ios::trunc);
  require(log.good(), "cannot write trainlog.jsonl in " + dir.string());
  TrainHooks hooks;
  hooks.on_update = [&log](const TrainLogRecord& rec) { log << to_json(rec).dump() << '\n'; };
  hooks.on_checkpoint = [&dir, &spec](long long step, const ModelParams& params) {
    save_checkpoint(checkpoint_path(dir, step), params, CheckpointMeta{spec.ppo.seed, step});
  };

  try {
    TrainResult result = train(spec.ppo, spec.model, spec.env, hooks);
    manifest.status = "complete";
    write_manifest(dir, manifest);
    return result;
  } catch (const NumericalDivergence&) {
    log.flush();
    manifest.status = "diverged";
    write_manifest(dir, manifest);
    throw;
  }
}

}  // namespace sortrl
