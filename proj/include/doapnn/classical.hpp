// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Learning-free two-microphone DOA: GCC-PHAT time delay and SRP-PHAT
// steered power over the 181-point azimuth grid.
//
// Sign convention throughout: a positive delay means channel 2 lags
// channel 1, and tau(theta) = spacing * cos(theta) / c.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/fft.hpp"
#include "doapnn/spectrum.hpp"

namespace doapnn {

inline constexpr double kPhatFloor = 1e-12;

struct TdoaEstimate {
  double delay_samples = 0;
  double delay_seconds = 0;
  double peak = 0;
  int max_lag = 0;
};

namespace detail {

template <class T>
void check_pair(std::span<const T> x1, std::span<const T> x2) {
  if (x1.size() != x2.size())
    throw InputError("channel lengths differ: " + std::to_string(x1.size()) +
                     " vs " + std::to_string(x2.size()));
  if (x1.size() < 512)
    throw InputError("need at least 512 samples, got " +
                     std::to_string(x1.size()));
  auto silent = [](std::span<const T> x) {
    return std::all_of(x.begin(), x.end(), [](T v) { return v == T{0}; });
  };
  if (silent(x1) || silent(x2))
    throw DegenerateSignalError("all-zero channel");
}

// PHAT-weighted cross spectrum conj(X1) X2 / |conj(X1) X2|.
template <class T>
std::vector<fft::Complex> phat_cross_spectrum(std::span<const T> x1,
                                              std::span<const T> x2,
                                              std::size_t n) {
  const auto a = fft::rfft<T>(x1, n);
  const auto b = fft::rfft<T>(x2, n);
  std::vector<fft::Complex> r(a.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto c = std::conj(a[k]) * b[k];
    r[k] = c / (std::abs(c) + kPhatFloor);
  }
  return r;
}

}  // namespace detail

template <class T>
TdoaEstimate gcc_phat_tdoa(std::span<const T> x1, std::span<const T> x2,
                           int max_lag, int sample_rate = 16000) {
  detail::check_pair(x1, x2);
  if (max_lag < 1) throw InputError("max_lag must be >= 1");
  const std::size_t n = fft::next_pow2(2 * x1.size());
  const auto cc = fft::irfft(detail::phat_cross_spectrum(x1, x2, n), n);
  auto at = [&](long lag) {
    return cc[static_cast<std::size_t>(lag >= 0 ? lag : static_cast<long>(n) + lag)];
  };
  long best = -max_lag;
  for (long lag = -max_lag + 1; lag <= max_lag; ++lag)
    if (at(lag) > at(best)) best = lag;
  double frac = 0.0;
  if (best > -max_lag && best < max_lag) {
    const double ym = at(best - 1), y0 = at(best), yp = at(best + 1);
    const double den = ym - 2.0 * y0 + yp;
    if (den < 0) frac = 0.5 * (ym - yp) / den;
  }
  TdoaEstimate est;
  est.delay_samples = static_cast<double>(best) + frac;
  est.delay_seconds = est.delay_samples / sample_rate;
  est.peak = at(best);
  est.max_lag = max_lag;
  return est;
}

// Samples of TDOA bound for a given spacing, rounded up, plus one of slack.
inline int max_lag_for(double spacing, double c = 343.0, int sample_rate = 16000) {
  return static_cast<int>(std::ceil(spacing / c * sample_rate)) + 1;
}

inline double tdoa_to_azimuth(double delay_seconds, double spacing,
                              double c = 343.0) {
  const double ratio = std::clamp(delay_seconds * c / spacing, -1.0, 1.0);
  return std::acos(ratio) * 180.0 / std::numbers::pi;
}

// Steered response power on the 0..180 degree grid.
template <class T>
std::array<double, kNumAzimuths> srp_phat_spectrum(std::span<const T> x1,
                                                   std::span<const T> x2,
                                                   double spacing,
                                                   double c = 343.0,
                                                   int sample_rate = 16000) {
  detail::check_pair(x1, x2);
  if (!(spacing > 0)) throw InputError("spacing must be positive");
  const std::size_t n = fft::next_pow2(x1.size());
  const auto r = detail::phat_cross_spectrum(x1, x2, n);
  std::array<double, kNumAzimuths> power{};
  for (std::size_t a = 0; a < kNumAzimuths; ++a) {
    const double tau =
        spacing * std::cos(static_cast<double>(a) * std::numbers::pi / 180.0) / c;
    // Exact fractional steering: rotate bin k by exp(+j w_k tau).
    const double dphi = 2.0 * std::numbers::pi * sample_rate * tau / n;
    const fft::Complex step(std::cos(dphi), std::sin(dphi));
    fft::Complex rot(1.0, 0.0);
    double acc = 0.0;
    for (std::size_t k = 1; k + 1 < r.size(); ++k) {
      rot *= step;
      if ((k & 255) == 0) {
        const double ph = dphi * static_cast<double>(k);
        rot = fft::Complex(std::cos(ph), std::sin(ph));
      }
      acc += (r[k] * rot).real();
    }
    power[a] = acc;
  }
  return power;
}

template <class T>
int srp_phat_doa(std::span<const T> x1, std::span<const T> x2, double spacing,
                 double c = 343.0, int sample_rate = 16000) {
  const auto p = srp_phat_spectrum(x1, x2, spacing, c, sample_rate);
  std::size_t best = 0;
  for (std::size_t a = 1; a < p.size(); ++a)
    if (p[a] > p[best]) best = a;
  return static_cast<int>(best);
}

// GCC-PHAT delay mapped to the nearest integer azimuth.
template <class T>
int gcc_phat_doa(std::span<const T> x1, std::span<const T> x2, double spacing,
                 double c = 343.0, int sample_rate = 16000) {
  const auto est =
      gcc_phat_tdoa(x1, x2, max_lag_for(spacing, c, sample_rate), sample_rate);
  return static_cast<int>(std::lround(tdoa_to_azimuth(est.delay_seconds, spacing, c)));
}

}  // namespace doapnn
