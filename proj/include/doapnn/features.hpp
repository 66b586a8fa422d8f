// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// STFT and the stacked real/imaginary multichannel feature tensor.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/fft.hpp"
#include "doapnn/tensor/ndarray.hpp"

namespace doapnn {

enum class WindowKind { kHann, kRect };

inline std::string to_string(WindowKind w) {
  return w == WindowKind::kHann ? "hann" : "rect";
}

struct StftParams {
  int sample_rate = 16000;
  int frame = 512;   // 32 ms
  int hop = 160;     // 10 ms
  int n_fft = 512;
  double fmin = 100.0;
  double fmax = 8000.0;
  WindowKind window = WindowKind::kHann;

  void validate() const {
    if (frame < 1 || hop < 1 || n_fft < 1 || sample_rate < 1)
      throw ConfigError("stft sizes must be positive");
    if (frame > n_fft) throw ConfigError("stft frame exceeds n_fft");
    if (hop > frame) throw ConfigError("stft hop exceeds frame");
    if (!(fmin < fmax) || fmax > sample_rate / 2.0)
      throw ConfigError("stft band must satisfy fmin < fmax <= fs/2");
  }

  double bin_hz() const { return static_cast<double>(sample_rate) / n_fft; }
  std::size_t num_bins() const { return static_cast<std::size_t>(n_fft / 2 + 1); }

  // Inclusive bin range [first, last] whose centre frequencies lie in
  // [fmin, fmax].
  std::size_t band_first() const {
    return static_cast<std::size_t>(std::ceil(fmin / bin_hz() - 1e-9));
  }
  std::size_t band_last() const {
    return std::min(num_bins() - 1,
                    static_cast<std::size_t>(std::floor(fmax / bin_hz() + 1e-9)));
  }
  std::size_t band_bins() const { return band_last() - band_first() + 1; }

  std::size_t num_frames(std::size_t len) const {
    if (len < static_cast<std::size_t>(frame)) return 0;
    return (len - frame) / hop + 1;
  }
};

inline std::vector<double> make_window(WindowKind kind, int n) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (kind == WindowKind::kHann)
    for (int i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// One-sided spectrogram, bin-major: at(k, t).
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(std::size_t k, std::size_t t) { return data[k * frames + t]; }
  const std::complex<double>& at(std::size_t k, std::size_t t) const {
    return data[k * frames + t];
  }
};

template <class T>
Spectrogram stft(std::span<const T> signal, const StftParams& p) {
  p.validate();
  if (signal.size() < static_cast<std::size_t>(p.frame))
    throw InputError("signal of " + std::to_string(signal.size()) +
                     " samples is shorter than one frame (" +
                     std::to_string(p.frame) + ")");
  const auto window = make_window(p.window, p.frame);
  Spectrogram s;
  s.bins = p.num_bins();
  s.frames = p.num_frames(signal.size());
  s.data.resize(s.bins * s.frames);
  std::vector<double> buf(static_cast<std::size_t>(p.frame));
  for (std::size_t t = 0; t < s.frames; ++t) {
    const T* src = signal.data() + t * p.hop;
    for (int i = 0; i < p.frame; ++i) buf[i] = window[i] * src[i];
    const auto spec = fft::rfft<double>(buf, static_cast<std::size_t>(p.n_fft));
    for (std::size_t k = 0; k < s.bins; ++k) s.at(k, t) = spec[k];
  }
  return s;
}

// Shape (2M, F, T), channels ordered re(m1), im(m1), re(m2), im(m2), ...
template <class T>
Tensor extract_feature(std::span<const std::vector<T>> channels,
                       const StftParams& p) {
  if (channels.empty()) throw InputError("no channels");
  for (const auto& c : channels)
    if (c.size() != channels[0].size())
      throw InputError("channel lengths differ: " +
                       std::to_string(c.size()) + " vs " +
                       std::to_string(channels[0].size()));
  const std::size_t first = p.band_first();
  const std::size_t f = p.band_bins();
  const std::size_t frames = p.num_frames(channels[0].size());
  Tensor out({2 * channels.size(), f, frames});
  for (std::size_t m = 0; m < channels.size(); ++m) {
    const auto s = stft<T>(channels[m], p);
    for (std::size_t k = 0; k < f; ++k)
      for (std::size_t t = 0; t < frames; ++t) {
        const auto v = s.at(first + k, t);
        out.at(2 * m, k, t) = static_cast<float>(v.real());
        out.at(2 * m + 1, k, t) = static_cast<float>(v.imag());
      }
  }
  return out;
}

}  // namespace doapnn
