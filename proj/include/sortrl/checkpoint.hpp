#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sortrl/error.hpp"
#include "sortrl/model.hpp"

namespace sortrl {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointMagic = "sortrl-checkpoint";

struct CheckpointMeta {
  std::uint64_t seed = 0;
  long long timesteps = 0;
};

namespace detail {

inline void write_f32_le(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline float read_f32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw DataFormatError("checkpoint truncated inside parameter data");
  const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                             (static_cast<std::uint32_t>(bytes[1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

// Single-file checkpoint: a human-readable key/value manifest, one blank
// line, then the parameter tensors as raw little-endian float32 in the
// canonical order of ModelParams::values().
inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const CheckpointMeta& meta) {
  params.cfg.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open checkpoint for writing: " + path.string());
  out << kCheckpointMagic << '\n';
  out << "format_version = " << kCheckpointFormatVersion << '\n';
  out << "length = " << params.cfg.length << '\n';
  out << "embed_dim = " << params.cfg.embed_dim << '\n';
  out << "num_layers = " << params.cfg.num_layers << '\n';
  out << "seed = " << meta.seed << '\n';
  out << "timesteps = " << meta.timesteps << '\n';
  out << "param_count = " << params.param_count() << '\n';
  out << '\n';
  for (const auto* tensor : params.values())
    for (float v : tensor->data) detail::write_f32_le(out, v);
  require(out.good(), "failed writing checkpoint: " + path.string());
}

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataFormatError("cannot open checkpoint: " + path.string());

  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw DataFormatError("not a checkpoint file: " + path.string());

  std::map<std::string, std::string> fields;
  while (std::getline(in, line) && !line.empty()) {
    const auto sep = line.find(" = ");
    if (sep == std::string::npos)
      throw DataFormatError("malformed checkpoint manifest line: " + line);
    fields[line.substr(0, sep)] = line.substr(sep + 3);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataFormatError("checkpoint manifest missing key: " + key);
    return it->second;
  };
  auto to_ll = [&](const std::string& key) {
    try {
      return std::stoll(field(key));
    } catch (const std::exception&) {
      throw DataFormatError("checkpoint manifest key is not a number: " + key);
    }
  };

  if (to_ll("format_version") != kCheckpointFormatVersion)
    throw DataFormatError("unsupported checkpoint format_version " + field("format_version") +
                          " (expected " + std::to_string(kCheckpointFormatVersion) + ")");

  ModelConfig cfg;
  cfg.length = static_cast<int>(to_ll("length"));
  cfg.embed_dim = static_cast<int>(to_ll("embed_dim"));
  cfg.num_layers = static_cast<int>(to_ll("num_layers"));
  try {
    cfg.validate();
  } catch (const ContractViolation& e) {
    throw DataFormatError(std::string("checkpoint manifest invalid: ") + e.what());
  }

  LoadedCheckpoint loaded;
  loaded.meta.seed = static_cast<std::uint64_t>(std::stoull(field("seed")));
  loaded.meta.timesteps = to_ll("timesteps");
  auto& p = loaded.params;
  p.cfg = cfg;
  p.tok_emb.init({cfg.length, cfg.embed_dim});
  p.pos_emb.init({cfg.length, cfg.embed_dim});
  p.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  for (auto& l : p.layers) {
    l.wq.init({cfg.embed_dim, cfg.embed_dim});
    l.wk.init({cfg.embed_dim, cfg.embed_dim});
    l.wv.init({cfg.embed_dim, cfg.embed_dim});
  }
  p.actor_w.init({cfg.embed_dim, cfg.num_actions()});
  p.actor_b.init({1, cfg.num_actions()});
  p.critic_w.init({cfg.embed_dim, 1});
  p.critic_b.init({1, 1});

  if (to_ll("param_count") != p.param_count())
    throw DataFormatError("checkpoint param_count does not match its own dimensions");

  for (auto* tensor : p.values())
    for (float& v : tensor->data) v = detail::read_f32_le(in);
  char extra;
  if (in.read(&extra, 1))
    throw DataFormatError("checkpoint has trailing bytes after parameter data");
  return loaded;
}

}  // namespace sortrl
