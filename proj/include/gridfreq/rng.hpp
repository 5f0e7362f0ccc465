#pragma once

// Deterministic, keyed random streams. Every consumer derives an independent
// stream key from (seed, stream id, node, sample index), so any sample of any
// trial can be regenerated in isolation — there is no shared generator state
// to advance in order. splitmix64 is used both as the key mixer and as the
// stream generator; Box-Muller turns the uniforms into Gaussians without
// caching, so draws are pure functions of the key and the draw index.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace gridfreq {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds one word into a key with full avalanche.
inline std::uint64_t mix_key(std::uint64_t key, std::uint64_t word) {
  std::uint64_t s = key + 0x9e3779b97f4a7c15ULL * (word + 0x632be59bd9b4e019ULL);
  return splitmix64_next(s);
}

/// Stream key from a seed and up to three coordinates (stream id, node,
/// sample index). Same inputs always give the same key.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_key(mix_key(mix_key(mix_key(seed, a), b), c), 0x5851f42d4c957f2dULL);
}

/// Small deterministic generator over one derived stream.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  /// Uniform draw strictly inside (0, 1); never returns 0 or 1, so it is
  /// safe to feed through log().
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Each call consumes two uniforms; no
  /// spare is cached, so the draw sequence is a pure function of the key.
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Two independent standard normals from one Box-Muller pair.
  std::pair<double, double> gaussian_pair() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Uniform integer in [0, n). Modulo bias is below 1e-18 for the tiny n
  /// used here (phase selection), far under any statistical tolerance.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

 private:
  std::uint64_t state_;
};

}  // namespace gridfreq
