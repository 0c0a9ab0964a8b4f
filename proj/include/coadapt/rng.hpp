#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace coadapt {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over the bytes of `text`, folded with `seed`. Stable across
/// platforms, unlike std::hash.
std::uint64_t hash_string(std::string_view text, std::uint64_t seed);

std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator whose derived draws are bit-reproducible on every
/// standard library (the std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (no cached second draw).
  double normal();
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);
  /// Index drawn with probability proportional to `weights` (all >= 0, sum > 0).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace coadapt
