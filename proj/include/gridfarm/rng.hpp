#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>

#include "gridfarm/core.hpp"

namespace gridfarm {

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// A pseudo-random substream keyed by (campaign seed, component label[, index]).
///
/// Streams never share state, so consuming more draws from one component leaves every
/// other component's sequence untouched. The engine is mt19937_64, whose output sequence
/// is fixed by the standard; the transforms below are ours so draws are identical across
/// standard library implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
      : engine_(splitmix64(splitmix64(seed ^ fnv1a64(label)) + index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // 53 random bits in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    // Box-Muller; both uniforms consumed on every call.
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Lognormal parameterised by its arithmetic mean and the sigma of the underlying normal.
  double lognormal_with_mean(double mean, double sigma) {
    const double mu = std::log(mean) - 0.5 * sigma * sigma;
    return std::exp(mu + sigma * normal());
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Index drawn proportionally to weights (which need not be normalised).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    // Rounding can leave u marginally positive; fall back to the last non-zero weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
      if (weights[i] > 0) return i;
    }
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

/// Samples a duration in seconds from the model.
inline double sample_seconds(const DurationModel& d, RngStream& rng) {
  switch (d.kind) {
    case DurationModel::Kind::Constant: return d.a;
    case DurationModel::Kind::Uniform: return rng.uniform(d.a, d.b);
    case DurationModel::Kind::LogNormal: return rng.lognormal_with_mean(d.a, d.b);
  }
  return d.a;
}

inline TimeMs sample_ms(const DurationModel& d, RngStream& rng, TimeMs floor = 0) {
  return std::max(floor, from_seconds(sample_seconds(d, rng)));
}

}  // namespace gridfarm
