// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Image-source room impulse responses for shoebox rooms, multichannel
// mixture rendering, and randomized two-microphone scene sampling.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/fft.hpp"
#include "doapnn/rng.hpp"

namespace doapnn {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct RoomSpec {
  Vec3 dims{5.0, 4.0, 3.0};  // L, W, H in metres
  double absorption = 0.5;   // uniform on all six surfaces
  double tmax = 0.4;         // RIR length in seconds
  std::array<int, 3> max_image_order{10, 10, 10};
  double speed_of_sound = 343.0;
  int sample_rate = 16000;

  void validate() const {
    for (double d : dims)
      if (!(d > 0)) throw GeometryError("room dimensions must be positive");
    if (!(absorption > 0 && absorption <= 1))
      throw GeometryError("absorption must be in (0, 1]");
    if (!(tmax > 0)) throw GeometryError("tmax must be positive");
    for (int n : max_image_order)
      if (n < 0) throw GeometryError("image order must be non-negative");
    if (!(speed_of_sound > 0) || sample_rate < 1)
      throw GeometryError("speed of sound and sample rate must be positive");
  }

  // Amplitude factor per wall reflection.
  double reflection() const { return std::sqrt(1.0 - absorption); }
  std::size_t rir_length() const {
    return static_cast<std::size_t>(std::llround(tmax * sample_rate));
  }
  bool strictly_inside(const Vec3& p) const {
    for (int i = 0; i < 3; ++i)
      if (!(p[i] > 0 && p[i] < dims[i])) return false;
    return true;
  }
};

struct ImageSource {
  std::array<int, 3> index{};
  Vec3 position{};
  int reflections = 0;
  double distance = 0;
  double delay = 0;      // seconds
  double amplitude = 0;  // beta^reflections / (4 pi r)
};

// Image coordinate along one axis of length len for lattice index n: even n
// translate the source, odd n mirror it. |n| walls are crossed.
inline double image_coordinate(int n, double src, double len) {
  return (n % 2 == 0) ? n * len + src : (n + 1) * len - src;
}

// Every image in [-Nx..Nx] x [-Ny..Ny] x [-Nz..Nz], in lexicographic index
// order.
inline std::vector<ImageSource> enumerate_images(const RoomSpec& room,
                                                 const Vec3& mic,
                                                 const Vec3& source) {
  room.validate();
  if (!room.strictly_inside(mic)) throw GeometryError("microphone outside room");
  if (!room.strictly_inside(source)) throw GeometryError("source outside room");
  if (norm(mic - source) == 0.0)
    throw GeometryError("microphone and source coincide");
  const double beta = room.reflection();
  const auto& n = room.max_image_order;
  std::vector<ImageSource> out;
  out.reserve(static_cast<std::size_t>((2 * n[0] + 1) * (2 * n[1] + 1) *
                                       (2 * n[2] + 1)));
  for (int i = -n[0]; i <= n[0]; ++i)
    for (int j = -n[1]; j <= n[1]; ++j)
      for (int k = -n[2]; k <= n[2]; ++k) {
        ImageSource im;
        im.index = {i, j, k};
        im.position = {image_coordinate(i, source[0], room.dims[0]),
                       image_coordinate(j, source[1], room.dims[1]),
                       image_coordinate(k, source[2], room.dims[2])};
        im.reflections = std::abs(i) + std::abs(j) + std::abs(k);
        im.distance = norm(im.position - mic);
        im.delay = im.distance / room.speed_of_sound;
        im.amplitude = std::pow(beta, im.reflections) /
                       (4.0 * std::numbers::pi * im.distance);
        out.push_back(im);
      }
  return out;
}

enum class DelayInterp {
  kSinc,     // 81-tap Hann-windowed sinc, sub-sample accurate
  kNearest,  // round to the nearest sample
};

inline constexpr int kSincTaps = 81;

// Adds amplitude * delta(t - delay_samples) to rir, band-limited.
inline void place_tap(std::vector<double>& rir, double delay_samples,
                      double amplitude, DelayInterp mode) {
  const long len = static_cast<long>(rir.size());
  if (mode == DelayInterp::kNearest) {
    const long k = std::lround(delay_samples);
    if (k >= 0 && k < len) rir[k] += amplitude;
    return;
  }
  constexpr int half = kSincTaps / 2;
  const long centre = std::lround(delay_samples);
  const long lo = std::max(0L, centre - half);
  const long hi = std::min(len - 1, centre + half);
  const double width = half + 0.5;
  for (long k = lo; k <= hi; ++k) {
    const double x = static_cast<double>(k) - delay_samples;
    if (std::abs(x) >= width) continue;
    const double sinc =
        x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * x / width));
    rir[k] += amplitude * sinc * win;
  }
}

using Rir = std::vector<double>;

inline Rir simulate_rir(const RoomSpec& room, const Vec3& mic, const Vec3& source,
                        DelayInterp mode = DelayInterp::kSinc) {
  const auto images = enumerate_images(room, mic, source);
  Rir rir(room.rir_length(), 0.0);
  const double fs = room.sample_rate;
  const double horizon = static_cast<double>(rir.size()) + kSincTaps / 2 + 1;
  for (const auto& im : images) {
    if (im.amplitude == 0.0) continue;
    const double d = im.delay * fs;
    if (d >= horizon) continue;
    place_tap(rir, d, im.amplitude, mode);
  }
  return rir;
}

// Linear convolution of x with h, truncated to x.size().
inline std::vector<double> convolve_truncated(std::span<const double> x,
                                              std::span<const double> h) {
  if (x.empty() || h.empty()) throw InputError("empty convolution operand");
  const std::size_t n = fft::next_pow2(x.size() + h.size() - 1);
  auto fx = fft::rfft<double>(x, n);
  const auto fh = fft::rfft<double>(h, n);
  for (std::size_t k = 0; k < fx.size(); ++k) fx[k] *= fh[k];
  auto y = fft::irfft(fx, n);
  y.resize(x.size());
  return y;
}

inline constexpr double kMixturePeak = 0.9;

// One channel per RIR, jointly peak-normalized to kMixturePeak.
inline std::vector<std::vector<float>> render_mixture(
    std::span<const float> source, std::span<const Rir> rirs) {
  if (source.empty() || rirs.empty())
    throw InputError("render_mixture needs a signal and at least one RIR");
  std::vector<double> x(source.begin(), source.end());
  std::vector<std::vector<double>> chans;
  double peak = 0.0;
  for (const auto& h : rirs) {
    chans.push_back(convolve_truncated(x, h));
    for (double v : chans.back()) peak = std::max(peak, std::abs(v));
  }
  const double gain = peak > 0 ? kMixturePeak / peak : 1.0;
  std::vector<std::vector<float>> out;
  for (const auto& c : chans) {
    std::vector<float> ch(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      ch[i] = static_cast<float>(c[i] * gain);
    out.push_back(std::move(ch));
  }
  return out;
}

// Two-element linear array. Mic 1 sits at +spacing/2 along the axis, so a
// source at azimuth 0 reaches mic 1 first and mic 2 lags by spacing / c.
struct MicArray {
  Vec3 center{};
  Vec3 axis{1.0, 0.0, 0.0};
  double spacing = 0.05;

  std::array<Vec3, 2> positions() const {
    const double h = spacing / 2.0;
    return {center + h * axis, center - h * axis};
  }

  // Unit vector at the given azimuth in the horizontal plane of the array.
  Vec3 direction(double azimuth_deg) const {
    const double th = azimuth_deg * std::numbers::pi / 180.0;
    const Vec3 perp{-axis[1], axis[0], 0.0};
    return std::cos(th) * axis + std::sin(th) * perp;
  }
};

struct SourcePlacement {
  Vec3 position{};
  int azimuth = 90;
  double range = 1.0;
};

struct Scene {
  RoomSpec room;
  MicArray mic;
  SourcePlacement source;
};

struct SceneSampler {
  std::vector<Vec3> rooms{{10, 8, 5}, {5, 4, 3}, {4, 2, 2}};
  double absorption_lo = 0.2, absorption_hi = 0.8;
  double tmax_lo = 0.2, tmax_hi = 0.6;
  std::array<int, 3> max_image_order{10, 10, 10};
  double mic_margin = 0.3;
  double source_margin = 0.1;
  double min_range = 0.5;
  int max_retries = 100;
};

// Distance from p along unit horizontal direction d to the nearest wall.
inline double distance_to_wall(const Vec3& p, const Vec3& d, const Vec3& dims) {
  double t = 1e300;
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 1e-12) t = std::min(t, (dims[i] - p[i]) / d[i]);
    if (d[i] < -1e-12) t = std::min(t, -p[i] / d[i]);
  }
  return t;
}

inline Scene sample_scene(Rng& rng, double spacing, int azimuth,
                          const SceneSampler& cfg = {}) {
  if (!(spacing > 0)) throw InputError("mic spacing must be positive");
  if (azimuth < 0 || azimuth > 180)
    throw InputError("azimuth " + std::to_string(azimuth) + " outside 0..180");
  if (cfg.rooms.empty()) throw InputError("empty room catalog");
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Scene s;
    s.room.dims = cfg.rooms[rng.below(cfg.rooms.size())];
    s.room.absorption = rng.uniform(cfg.absorption_lo, cfg.absorption_hi);
    s.room.tmax = rng.uniform(cfg.tmax_lo, cfg.tmax_hi);
    s.room.max_image_order = cfg.max_image_order;
    const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.mic.axis = {std::cos(yaw), std::sin(yaw), 0.0};
    s.mic.spacing = spacing;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      const double lo = cfg.mic_margin, hi = s.room.dims[i] - cfg.mic_margin;
      if (hi <= lo) ok = false;
      s.mic.center[i] = rng.uniform(lo, hi);
    }
    if (!ok) continue;
    const Vec3 dir = s.mic.direction(azimuth);
    const double max_range =
        distance_to_wall(s.mic.center, dir, s.room.dims) - cfg.source_margin;
    if (max_range <= cfg.min_range) continue;
    s.source.azimuth = azimuth;
    s.source.range = rng.uniform(cfg.min_range, max_range);
    s.source.position = s.mic.center + s.source.range * dir;
    const auto mics = s.mic.positions();
    if (!s.room.strictly_inside(s.source.position) ||
        !s.room.strictly_inside(mics[0]) || !s.room.strictly_inside(mics[1]))
      continue;
    return s;
  }
  throw SamplingError("no feasible scene for spacing " + std::to_string(spacing) +
                      " azimuth " + std::to_string(azimuth) + " after " +
                      std::to_string(cfg.max_retries) + " retries");
}

}  // namespace doapnn
