#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sortrl/checkpoint.hpp"

using namespace sortrl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("sortrl-ckpt-test-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelParams make_params(unsigned long long seed = 17) {
  const ModelConfig cfg{.length = 5, .embed_dim = 8, .num_layers = 2};
  Rng rng(seed);
  return init_params<float>(cfg, rng);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir tmp;
  const auto p = make_params();
  const auto file = tmp.path / "ckpt";
  save_checkpoint(file, p, {.seed = 123, .timesteps = 4096});

  const auto loaded = load_checkpoint(file);
  CHECK(loaded.meta.seed == 123);
  CHECK(loaded.meta.timesteps == 4096);
  CHECK(loaded.params.cfg.length == 5);
  CHECK(loaded.params.cfg.embed_dim == 8);
  CHECK(loaded.params.cfg.num_layers == 2);

  const auto want = p.values();
  const auto got = loaded.params.values();
  REQUIRE(want.size() == got.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(want[i]->shape == got[i]->shape);
    CHECK(want[i]->data == got[i]->data);  // float-exact
  }

  // Saving the loaded params reproduces the file byte for byte.
  const auto file2 = tmp.path / "ckpt2";
  save_checkpoint(file2, loaded.params, loaded.meta);
  CHECK(read_bytes(file) == read_bytes(file2));
}

TEST_CASE("checkpoint header is a readable manifest") {
  TempDir tmp;
  const auto file = tmp.path / "ckpt";
  save_checkpoint(file, make_params(), {.seed = 7, .timesteps = 100});
  const auto bytes = read_bytes(file);
  CHECK(bytes.rfind("sortrl-checkpoint\n", 0) == 0);
  CHECK(bytes.find("format_version = 1\n") != std::string::npos);
  CHECK(bytes.find("length = 5\n") != std::string::npos);
  CHECK(bytes.find("param_count = ") != std::string::npos);
  // Exactly one blank line separates manifest from binary data.
  CHECK(bytes.find("\n\n") != std::string::npos);
}

TEST_CASE("corrupted checkpoints are rejected as data-format errors") {
  TempDir tmp;
  const auto file = tmp.path / "ckpt";
  save_checkpoint(file, make_params(), {.seed = 1, .timesteps = 10});
  const std::string good = read_bytes(file);

  SECTION("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "nope"), DataFormatError);
  }
  SECTION("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    write_bytes(file, bad);
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("unsupported format version") {
    std::string bad = good;
    const auto pos = bad.find("format_version = 1");
    bad.replace(pos, std::string("format_version = 1").size(), "format_version = 2");
    write_bytes(file, bad);
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("truncated parameter data") {
    write_bytes(file, good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("trailing bytes") {
    write_bytes(file, good + "x");
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("param_count disagrees with dimensions") {
    std::string bad = good;
    const auto pos = bad.find("param_count = ");
    bad.replace(pos + 14, 1, "9");  // clobber the leading digit
    write_bytes(file, bad);
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("missing manifest key") {
    std::string bad = good;
    const auto pos = bad.find("seed = 1\n");
    bad.erase(pos, std::string("seed = 1\n").size());
    write_bytes(file, bad);
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
  SECTION("invalid dimensions in manifest") {
    std::string bad = good;
    const auto pos = bad.find("length = 5");
    bad.replace(pos, std::string("length = 5").size(), "length = 2");
    write_bytes(file, bad);
    CHECK_THROWS_AS(load_checkpoint(file), DataFormatError);
  }
}
