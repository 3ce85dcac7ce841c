#pragma once

// Un-normalized forward DFT, X[k] = sum_n x[n] exp(-2 pi i k n / N), for any N:
// iterative radix-2 for powers of two, Bluestein's chirp-z otherwise.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace evhta::fft {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

inline void radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1 : -1);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // twiddles computed directly rather than by recurrence to avoid drift
        const cplx w = std::polar(1.0, ang * static_cast<double>(k));
        const cplx u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

}  // namespace detail

inline std::vector<cplx> forward(std::vector<cplx> x) {
  const std::size_t n = x.size();
  if (n <= 1) return x;
  if (detail::is_pow2(n)) {
    detail::radix2(x, false);
    return x;
  }
  // Bluestein: nk = (k^2 + n^2 - (k-n)^2) / 2
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);  // exact angle reduction
    chirp[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  std::vector<cplx> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
  detail::radix2(a, false);
  detail::radix2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  detail::radix2(a, true);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  return x;
}

}  // namespace evhta::fft
