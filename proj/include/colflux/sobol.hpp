#pragma once

// Sobol low-discrepancy sequence with the Joe-Kuo direction numbers (the set
// shipped with SciPy), generated in Gray-code order.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "colflux/errors.hpp"

namespace colflux {

namespace detail {

struct SobolPolynomial {
  std::uint32_t poly;  ///< primitive polynomial including leading and constant terms
  int degree;
  std::array<std::uint32_t, 9> m;  ///< initial direction integers m_1..m_degree
};

// First dimension is the van der Corput sequence.
inline constexpr SobolPolynomial kSobolTable[] = {
    {1u, 0, {1}},
    {3u, 1, {1}},
    {7u, 2, {1, 3}},
    {11u, 3, {1, 3, 1}},
    {13u, 3, {1, 1, 1}},
    {19u, 4, {1, 1, 3, 3}},
    {25u, 4, {1, 3, 5, 13}},
    {37u, 5, {1, 1, 5, 5, 17}},
    {41u, 5, {1, 1, 5, 5, 5}},
    {47u, 5, {1, 1, 7, 11, 19}},
    {55u, 5, {1, 1, 5, 1, 1}},
    {59u, 5, {1, 1, 1, 3, 11}},
    {61u, 5, {1, 3, 5, 5, 31}},
    {67u, 6, {1, 3, 3, 9, 7, 49}},
    {91u, 6, {1, 1, 1, 15, 21, 21}},
    {97u, 6, {1, 3, 1, 13, 27, 49}},
    {103u, 6, {1, 1, 1, 15, 7, 5}},
    {109u, 6, {1, 3, 1, 15, 13, 25}},
    {115u, 6, {1, 1, 5, 5, 19, 61}},
    {131u, 7, {1, 3, 7, 11, 23, 15, 103}},
    {137u, 7, {1, 3, 7, 13, 13, 15, 69}},
    {143u, 7, {1, 1, 3, 13, 7, 35, 63}},
    {145u, 7, {1, 3, 5, 9, 1, 25, 53}},
    {157u, 7, {1, 3, 1, 13, 9, 35, 107}},
    {167u, 7, {1, 3, 1, 5, 27, 61, 31}},
    {171u, 7, {1, 1, 5, 11, 19, 41, 61}},
    {185u, 7, {1, 3, 5, 3, 3, 13, 69}},
    {191u, 7, {1, 1, 7, 13, 1, 19, 1}},
    {193u, 7, {1, 3, 7, 5, 13, 19, 59}},
    {203u, 7, {1, 1, 3, 9, 25, 29, 41}},
    {211u, 7, {1, 3, 5, 13, 23, 1, 55}},
    {213u, 7, {1, 3, 7, 3, 13, 59, 17}},
    {229u, 7, {1, 3, 1, 3, 5, 53, 69}},
    {239u, 7, {1, 1, 5, 5, 23, 33, 13}},
    {241u, 7, {1, 1, 7, 7, 1, 61, 123}},
    {247u, 7, {1, 1, 7, 9, 13, 61, 49}},
    {253u, 7, {1, 3, 3, 5, 3, 55, 33}},
    {285u, 8, {1, 3, 1, 15, 31, 13, 49, 245}},
    {299u, 8, {1, 3, 5, 15, 31, 59, 63, 97}},
    {301u, 8, {1, 3, 1, 11, 11, 11, 77, 249}},
    {333u, 8, {1, 3, 1, 11, 27, 43, 71, 9}},
    {351u, 8, {1, 1, 7, 15, 21, 11, 81, 45}},
    {355u, 8, {1, 3, 7, 3, 25, 31, 65, 79}},
    {357u, 8, {1, 3, 1, 1, 19, 11, 3, 205}},
    {361u, 8, {1, 1, 5, 9, 19, 21, 29, 157}},
    {369u, 8, {1, 3, 7, 11, 1, 33, 89, 185}},
    {391u, 8, {1, 3, 3, 3, 15, 9, 79, 71}},
    {397u, 8, {1, 3, 7, 11, 15, 39, 119, 27}},
    {425u, 8, {1, 1, 3, 1, 11, 31, 97, 225}},
    {451u, 8, {1, 1, 1, 3, 23, 43, 57, 177}},
    {463u, 8, {1, 3, 7, 7, 17, 17, 37, 71}},
    {487u, 8, {1, 3, 1, 5, 27, 63, 123, 213}},
    {501u, 8, {1, 1, 3, 5, 11, 43, 53, 133}},
    {529u, 9, {1, 3, 5, 5, 29, 17, 47, 173, 479}},
    {539u, 9, {1, 3, 3, 11, 3, 1, 109, 9, 69}},
    {545u, 9, {1, 1, 1, 5, 17, 39, 23, 5, 343}},
    {557u, 9, {1, 3, 1, 5, 25, 15, 31, 103, 499}},
    {563u, 9, {1, 1, 1, 11, 11, 17, 63, 105, 183}},
    {601u, 9, {1, 1, 5, 11, 9, 29, 97, 231, 363}},
    {607u, 9, {1, 1, 5, 15, 19, 45, 41, 7, 383}},
    {617u, 9, {1, 3, 7, 7, 31, 19, 83, 137, 221}},
    {623u, 9, {1, 1, 1, 3, 23, 15, 111, 223, 83}},
    {631u, 9, {1, 1, 5, 13, 31, 15, 55, 25, 161}},
    {637u, 9, {1, 1, 3, 13, 25, 47, 39, 87, 257}},
};

}  // namespace detail

inline constexpr std::size_t kSobolMaxDimension = std::size(detail::kSobolTable);
inline constexpr std::size_t kSobolMaxPoints = std::size_t{1} << 20;

/// Direction numbers v_k = m_k / 2^k as 32-bit fixed point, k = 1..32.
inline std::array<std::uint32_t, 32> sobol_directions(std::size_t dim) {
  if (dim >= kSobolMaxDimension) throw DomainError("sobol: dimension exceeds the direction-number table");
  const detail::SobolPolynomial& t = detail::kSobolTable[dim];
  std::array<std::uint32_t, 32> m{};
  if (dim == 0) {
    m.fill(1);
  } else {
    const int s = t.degree;
    for (int k = 0; k < s; ++k) m[k] = t.m[k];
    for (int k = s; k < 32; ++k) {
      std::uint32_t next = m[k - s] ^ (m[k - s] << s);
      for (int i = 1; i < s; ++i) {
        if ((t.poly >> (s - i)) & 1u) next ^= m[k - i] << i;
      }
      m[k] = next;
    }
  }
  std::array<std::uint32_t, 32> v{};
  for (int k = 0; k < 32; ++k) v[k] = m[k] << (31 - k);
  return v;
}

/// First n points (row-major n x d) of the d-dimensional sequence, skipping
/// the all-zero point, so every coordinate lies strictly inside (0, 1).
inline std::vector<double> sobol_points(std::size_t n, std::size_t d) {
  if (d == 0 || d > kSobolMaxDimension) throw DomainError("sobol: dimension must be in [1, 64]");
  if (n > kSobolMaxPoints) throw DomainError("sobol: at most 2^20 points");
  std::vector<std::array<std::uint32_t, 32>> v(d);
  for (std::size_t j = 0; j < d; ++j) v[j] = sobol_directions(j);
  std::vector<std::uint32_t> x(d, 0);
  std::vector<double> out(n * d);
  constexpr double scale = 1.0 / 4294967296.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = std::countr_one(static_cast<std::uint32_t>(i));
    for (std::size_t j = 0; j < d; ++j) {
      x[j] ^= v[j][c];
      out[i * d + j] = static_cast<double>(x[j]) * scale;
    }
  }
  return out;
}

}  // namespace colflux
