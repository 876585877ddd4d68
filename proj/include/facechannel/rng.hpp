#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace facechannel {

/// Seeded random source. All sampling in the library flows through this type
/// so that a run is fully determined by its seeds; nothing touches global
/// generator state. Copyable, which lets callers replay a draw sequence.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (cosine branch).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform index in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  /// Fisher-Yates shuffle.
  template <typename It>
  void shuffle(It first, It last) {
    const std::size_t n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  /// Derive an independent stream from the construction seed, e.g. one per epoch.
  Rng spawn(std::uint64_t salt) const {
    return Rng(seed_ ^ (salt * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull));
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

} // namespace facechannel
