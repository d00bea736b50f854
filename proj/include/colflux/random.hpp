#pragma once

// Seeded randomness with results that do not depend on the standard library's
// distribution implementations, so artifacts are identical across toolchains.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include <boost/math/distributions/normal.hpp>

#include "colflux/errors.hpp"

namespace colflux {

using Rng = std::mt19937_64;

/// Decorrelates derived seeds (e.g. per draw or per policy).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

/// Uniform on the open interval (0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
}

/// Uniform integer in [0, n) without modulo bias.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw DomainError("uniform_index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  for (;;) {
    const std::uint64_t r = rng();
    if (r < limit) return static_cast<std::size_t>(r % range);
  }
}

template <class T>
void shuffle(std::span<T> v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

inline double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: probability must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Zero-mean normal with standard deviation sigma truncated to [-bound, bound].
struct TruncatedNormal {
  double mean = 0.0;
  double sigma = 1.0;
  double lower = -1.0;
  double upper = 1.0;

  static TruncatedNormal symmetric(double mean, double sigma, double half_width) {
    return {mean, sigma, mean - half_width, mean + half_width};
  }

  /// Inverse CDF at u in (0, 1). A zero sigma collapses to the mean.
  [[nodiscard]] double quantile(double u) const {
    if (!(sigma > 0.0)) return mean;
    const double a = normal_cdf((lower - mean) / sigma);
    const double b = normal_cdf((upper - mean) / sigma);
    const double p = std::clamp(a + u * (b - a), std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
    return std::clamp(mean + sigma * normal_quantile(p), lower, upper);
  }

  [[nodiscard]] double cdf(double x) const {
    if (!(sigma > 0.0)) return x < mean ? 0.0 : 1.0;
    if (x <= lower) return 0.0;
    if (x >= upper) return 1.0;
    const double a = normal_cdf((lower - mean) / sigma);
    const double b = normal_cdf((upper - mean) / sigma);
    return (normal_cdf((x - mean) / sigma) - a) / (b - a);
  }

  double draw(Rng& rng) const { return quantile(uniform01(rng)); }
};

}  // namespace colflux
