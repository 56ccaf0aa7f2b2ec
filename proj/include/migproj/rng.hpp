#pragma once

// Random number generation with a fixed, documented contract:
//
//  * engine: xoshiro256** (Blackman & Vigna), state filled by splitmix64;
//  * substream (seed, k): splitmix64 seeded with seed ^ (k + 1) * 0x9E3779B97F4A7C15,
//    so every chain / trajectory owns an independent, reproducible stream;
//  * uniform: top 53 bits, shifted by half an ulp so 0 and 1 never occur;
//  * normal: Box-Muller, one variate per two uniforms (no cached spare);
//  * gamma: Marsaglia-Tsang squeeze, with the u^(1/shape) boost for shape < 1.
//
// The std:: distributions are not used because their algorithms differ
// between standard library implementations.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace migproj {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  /// Independent stream `index` derived from `seed`.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed ^ ((index + 1) * 0x9E3779B97F4A7C15ULL));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, 1).
  double gamma(double shape) {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Inverse-gamma with shape `shape` and rate `rate`: density
  /// proportional to x^(-shape-1) exp(-rate/x).
  double inverse_gamma(double shape, double rate) { return rate / gamma(shape); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
  }

  std::uint64_t s_[4]{};
};

}  // namespace migproj
