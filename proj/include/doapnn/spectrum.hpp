// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Gaussian spatial-spectrum labels over the 0..180 degree half circle,
// argmax decoding, and the MAE / ACC@{5,10,15} metrics.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"

namespace doapnn {

inline constexpr std::size_t kNumAzimuths = 181;
inline constexpr double kDefaultSigma = 8.0;

using SpatialSpectrum = std::array<float, kNumAzimuths>;

// Angular distance on the half circle. 0 and 180 degrees are opposite
// endfire directions, so there is no wraparound.
inline double angular_distance(double a, double b) { return std::abs(a - b); }

// p(theta_i) = exp(-d(theta_i, theta)^2 / (2 sigma^2)), evaluated in T.
template <class T>
std::array<T, kNumAzimuths> gaussian_spectrum(int theta, double sigma) {
  if (theta < 0 || theta > 180)
    throw InputError("azimuth " + std::to_string(theta) + " outside 0..180");
  if (!(sigma > 0)) throw InputError("sigma must be positive");
  std::array<T, kNumAzimuths> p{};
  for (std::size_t i = 0; i < kNumAzimuths; ++i) {
    const double d = angular_distance(static_cast<double>(i), theta);
    p[i] = static_cast<T>(std::exp(-d * d / (2.0 * sigma * sigma)));
  }
  return p;
}

inline SpatialSpectrum encode_spectrum(int theta, double sigma = kDefaultSigma) {
  return gaussian_spectrum<float>(theta, sigma);
}

// No source: the all-zero spectrum.
inline SpatialSpectrum encode_silence() { return SpatialSpectrum{}; }

// Index of the maximum; ties go to the lowest index.
inline int decode_angle(std::span<const float> spectrum) {
  if (spectrum.size() != kNumAzimuths)
    throw DimensionError("spectrum must have 181 values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < spectrum.size(); ++i)
    if (spectrum[i] > spectrum[best]) best = i;
  return static_cast<int>(best);
}

inline double mse_loss(std::span<const float> predicted,
                       std::span<const float> target) {
  if (predicted.size() != target.size())
    throw DimensionError("mse_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = static_cast<double>(predicted[i]) - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

struct EvalReport {
  double mae = 0.0;
  double acc5 = 0.0;
  double acc10 = 0.0;
  double acc15 = 0.0;
  std::size_t n = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport evaluate(std::span<const int> predictions,
                           std::span<const int> truths) {
  if (predictions.empty())
    throw InputError("evaluate needs at least one prediction");
  if (predictions.size() != truths.size())
    throw InputError("evaluate: predictions and truths differ in length");
  EvalReport r;
  r.n = predictions.size();
  std::size_t hit5 = 0, hit10 = 0, hit15 = 0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const int err = std::abs(predictions[i] - truths[i]);
    abs_sum += err;
    hit5 += err <= 5;
    hit10 += err <= 10;
    hit15 += err <= 15;
  }
  const double n = static_cast<double>(r.n);
  r.mae = abs_sum / n;
  r.acc5 = 100.0 * static_cast<double>(hit5) / n;
  r.acc10 = 100.0 * static_cast<double>(hit10) / n;
  r.acc15 = 100.0 * static_cast<double>(hit15) / n;
  return r;
}

// Sum over tasks of each task's expected loss.
inline double cumulative_loss(std::span<const double> per_task_losses) {
  double total = 0.0;
  for (double l : per_task_losses) total += l;
  return total;
}

// Sample-weighted pooling of per-task reports into one aggregate row.
inline EvalReport pool_reports(std::span<const EvalReport> reports) {
  EvalReport out;
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.n);
    out.mae += w * r.mae;
    out.acc5 += w * r.acc5;
    out.acc10 += w * r.acc10;
    out.acc15 += w * r.acc15;
    out.n += r.n;
  }
  if (out.n == 0) return out;
  const double n = static_cast<double>(out.n);
  out.mae /= n;
  out.acc5 /= n;
  out.acc10 /= n;
  out.acc15 /= n;
  return out;
}

}  // namespace doapnn
