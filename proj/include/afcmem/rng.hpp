#pragma once

// Counter-based random streams: every (seed, trial) pair owns an independent
// stream, so Monte Carlo results do not depend on execution order or on how
// trials are split between threads.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace afcmem::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Satisfies UniformRandomBitGenerator, so it also drives <random> distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, std::uint64_t index)
      : state_(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Poisson variate. Inversion for small means (the common case here, where
/// most trials see no photon); the library sampler above that.
inline std::uint64_t poisson(double mean, Stream& s) {
  if (!(mean > 0.0)) return 0;
  if (mean < 30.0) {
    const double u = s.uniform();
    double p = std::exp(-mean), cdf = p;
    std::uint64_t k = 0;
    while (u >= cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(s);
}

}  // namespace afcmem::rng
