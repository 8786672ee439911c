#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "wavefuse/common.hpp"

namespace wavefuse {

// Iterative radix-2 FFT plus a Bluestein fallback for arbitrary lengths, so
// 16,000-point one-second segments transform exactly (1 Hz bins at 16 kHz).

namespace detail {

constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

}  // namespace detail

// Forward/inverse DFT of arbitrary length. The inverse applies the 1/n
// normalization.
inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x,
                                             bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 0) throw ShapeError("fft: empty input");
  if (detail::is_pow2(n)) {
    detail::fft_pow2(x, inverse);
    return x;
  }
  // Bluestein: express the DFT as a convolution with a chirp and evaluate
  // the convolution with power-of-two FFTs.
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for long inputs.
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * detail::kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }
  const std::size_t m = detail::next_pow2(2 * n - 1);
  std::vector<std::complex<double>> a(m, {0.0, 0.0}), b(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  for (std::size_t k = 0; k < n; ++k) {
    b[k] = std::conj(chirp[k]);
    if (k > 0) b[m - k] = std::conj(chirp[k]);
  }
  detail::fft_pow2(a, false);
  detail::fft_pow2(b, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
  detail::fft_pow2(a, true);
  std::vector<std::complex<double>> y(n);
  for (std::size_t k = 0; k < n; ++k) y[k] = a[k] * chirp[k];
  if (inverse)
    for (auto& v : y) v /= static_cast<double>(n);
  return y;
}

inline std::vector<std::complex<double>> fft_real(const std::vector<double>& x) {
  std::vector<std::complex<double>> c(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = {x[i], 0.0};
  return fft(std::move(c));
}

}  // namespace wavefuse
