#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mfl {
namespace detail {

// Iterative radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.141592653589793238462643383280 /
                       static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Linear convolution of `signal` with a symmetric kernel sampled at offsets
// -half..half (kernel.size() == 2*half+1); returns the central signal-aligned
// part, i.e. out[i] = sum_m kernel[m+half] * signal[i-m].
inline std::vector<double> convolve_symmetric(const std::vector<double>& signal,
                                              const std::vector<double>& kernel) {
  const std::size_t half = kernel.size() / 2;
  const std::size_t full = signal.size() + kernel.size() - 1;
  std::size_t p = 1;
  while (p < full) p <<= 1;
  std::vector<std::complex<double>> fa(p), fb(p);
  for (std::size_t i = 0; i < signal.size(); ++i) fa[i] = signal[i];
  for (std::size_t i = 0; i < kernel.size(); ++i) fb[i] = kernel[i];
  fft_inplace(fa, false);
  fft_inplace(fb, false);
  for (std::size_t i = 0; i < p; ++i) fa[i] *= fb[i];
  fft_inplace(fa, true);
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = fa[i + half].real();
  return out;
}

}  // namespace detail
}  // namespace mfl
