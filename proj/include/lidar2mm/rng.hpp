#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace lidar2mm {

/// Seeded, splittable random source.
///
/// A generator is identified by a (seed, stream) pair; equal pairs reproduce
/// byte-identical draw sequences. Independent streams are derived with
/// split(), which is a pure function of the parent stream and the label, so
/// per-frame or per-file work can run in parallel in any order without
/// changing results.
///
/// Draws come from std::mt19937_64 (output fully specified by the standard);
/// the uniform/normal mappings below are implemented here rather than with
/// std::*_distribution so that results do not depend on the standard library
/// version.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(mix(seed ^ mix(stream))) {}

  /// Derives an independent stream for a named stage.
  SeededRng split(std::string_view label) const {
    std::uint64_t h = stream_ ^ 0x9e3779b97f4a7c15ull;
    for (char c : label) {
      h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    }
    return SeededRng(seed_, mix(h));
  }

  /// Derives an independent stream for an indexed unit (frame, trial, ...).
  SeededRng split(std::uint64_t index) const {
    return SeededRng(seed_, mix(stream_ + 0x9e3779b97f4a7c15ull * (index + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in [lo, hi); returns lo exactly when lo == hi.
  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("uniform: lo > hi");
    return lo + uniform01() * (hi - lo);
  }

  /// Box-Muller normal draw; consumes exactly two uniforms.
  double normal(double mean, double stddev) {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * (r * std::cos(2.0 * kPi * u2));
  }

  /// True with probability p; exact for p = 0 and p = 1.
  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased integer draw in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below: n must be > 0");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace lidar2mm
