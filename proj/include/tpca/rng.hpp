#pragma once

// Portable random streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++ standard.
// Uniforms: top 53 bits of one engine draw, scaled to [0, 1).
// Normals: Marsaglia polar method on those uniforms (the library never uses
// std::normal_distribution, whose algorithm is implementation-defined).
// Streams: child seeds are derived from (parent seed, index) with SplitMix64,
// so adding streams never perturbs existing ones.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tpca {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of child stream `index` under `parent`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(parent ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b) noexcept {
  return derive_seed(derive_seed(parent, a), b);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    for (;;) {
      const double a = 2.0 * uniform() - 1.0;
      const double b = 2.0 * uniform() - 1.0;
      const double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) {
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = b * f;
        has_spare_ = true;
        return a * f;
      }
    }
  }

  void fill_normal(std::span<double> out) {
    for (double& x : out) x = normal();
  }

  /// Uniform point on the unit sphere in R^n (normalized Gaussian vector).
  std::vector<double> unit_vector(std::size_t n) {
    std::vector<double> v(n);
    for (;;) {
      fill_normal(v);
      double ss = 0.0;
      for (double x : v) ss += x * x;
      if (ss > 0.0) {
        const double inv = 1.0 / std::sqrt(ss);
        for (double& x : v) x *= inv;
        return v;
      }
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tpca
