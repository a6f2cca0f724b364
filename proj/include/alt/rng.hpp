#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace alt {

/// Portable pseudo-random generator: xoshiro256** (Blackman & Vigna) seeded by
/// expanding a 64-bit seed through splitmix64. Every derived distribution below
/// is defined here rather than via <random> so that streams are bit-identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform();
  /// Uniform integer in [0, n) by rejection (no modulo bias). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, the pair's sine half is discarded).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from a base seed and a path of indices,
/// e.g. mix_seed({seed, iteration, prompt, sample}).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

}  // namespace alt
