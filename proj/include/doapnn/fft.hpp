// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace doapnn::fft {

using Complex = std::complex<double>;

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {
inline Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> f = [] {
    Eigen::FFT<double> e;
    e.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return e;
  }();
  return f;
}
}  // namespace detail

// One-sided DFT of x zero-padded (or truncated) to n points; n/2+1 bins.
template <class T>
std::vector<Complex> rfft(std::span<const T> x, std::size_t n) {
  std::vector<double> buf(n, 0.0);
  for (std::size_t i = 0; i < std::min(n, x.size()); ++i) buf[i] = x[i];
  std::vector<Complex> out;
  detail::engine().fwd(out, buf);
  out.resize(n / 2 + 1);
  return out;
}

// Inverse of rfft, scaled by 1/n.
inline std::vector<double> irfft(const std::vector<Complex>& half, std::size_t n) {
  std::vector<double> out;
  detail::engine().inv(out, half, static_cast<Eigen::Index>(n));
  return out;
}

}  // namespace doapnn::fft
