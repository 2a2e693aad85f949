#pragma once

#include <cmath>
#include <cstdint>

namespace qcroute {

// SplitMix64 stream. Fixed here (rather than std::mt19937 etc.) so that every
// seeded artifact is bit-identical across platforms and standard libraries.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; never zero, so it is safe under log().
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller, cosine branch only: two uniforms are
  // consumed per draw and nothing is cached, so the stream position after n
  // draws is the same in any reimplementation.
  double next_gaussian() {
    const double u1 = next_double_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n), n >= 1. Modulo bias is irrelevant at the
  // desk scales used here and keeps the mapping trivially portable.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }
};

}  // namespace qcroute
