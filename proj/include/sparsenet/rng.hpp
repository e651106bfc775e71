#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sparsenet {

// Deterministic, splittable random stream. The engine (mt19937_64) is fully
// specified by the standard and all distribution transforms are implemented
// here rather than with std::*_distribution, so identical seeds give
// bit-identical draws on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  // Independent child stream; a pure function of (seed, tag), not of how many
  // values the parent has drawn.
  Rng split(std::uint64_t tag) const {
    return Rng(mix(seed_ + 0x9E3779B97F4A7C15ULL * (tag + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform01_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; the sine partner is discarded to keep the stream layout simple.
  double normal(double mean, double stddev) {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<std::size_t>(v % bound);
  }

  std::uint64_t seed() const { return seed_; }

  // splitmix64 finalizer; also usable as a standalone value mixer.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sparsenet
