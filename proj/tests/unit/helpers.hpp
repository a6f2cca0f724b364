#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "alt/corpus.hpp"
#include "alt/model.hpp"
#include "alt/rng.hpp"

namespace testutil {

inline alt::Vocabulary tiny_vocab(int k = 5) {
  return alt::build_vocabulary({"hi", "sun", "dog"}, {"grr", "ugh"}, k);
}

inline alt::lm::ModelConfig tiny_model(int vocab, int d_model = 8, int n_layers = 1, int n_heads = 2, int d_ff = 16,
                                       int max_seq_len = 16) {
  alt::lm::ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = d_model;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_ff = d_ff;
  c.max_seq_len = max_seq_len;
  return c;
}

/// Tiny float model with weights larger than the init default so the output
/// distribution is far from uniform.
inline alt::lm::Parameters<float> random_params(const alt::lm::ModelConfig& cfg, std::uint64_t seed,
                                                double scale = 0.5) {
  auto p = alt::lm::init_params(cfg, seed);
  alt::Rng rng(seed ^ 0x5eedULL);
  for (auto& v : p.values) v = static_cast<float>(v + scale * rng.normal());
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    alt::Rng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)) ^
                 static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
    path = std::filesystem::temp_directory_path() / ("alt_test_" + tag + "_" + std::to_string(rng.next_u64() % 1000000));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str(const std::string& leaf) const { return (path / leaf).string(); }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
