// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Seeded synthetic source signals standing in for a speech corpus.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/rng.hpp"

namespace doapnn {

enum class SynthKind { kWhite, kSpeechShaped };

inline std::string to_string(SynthKind k) {
  return k == SynthKind::kWhite ? "white" : "speech-shaped";
}
inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "white") return SynthKind::kWhite;
  if (s == "speech-shaped") return SynthKind::kSpeechShaped;
  throw ConfigError("unknown synthetic source kind '" + s + "'");
}

inline constexpr double kSynthPeak = 0.9;
inline constexpr double kSpeechTiltHz = 500.0;

// Gaussian white noise; the speech-shaped variant passes it through a
// one-pole low-pass at 500 Hz (-6 dB/octave above the corner). Peak-scaled
// to 0.9.
inline std::vector<float> synth_source(SynthKind kind, double seconds,
                                       std::uint64_t seed,
                                       int sample_rate = 16000) {
  if (!(seconds > 0)) throw InputError("synthetic source length must be positive");
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  if (kind == SynthKind::kSpeechShaped) {
    const double a = std::exp(-2.0 * std::numbers::pi * kSpeechTiltHz / sample_rate);
    double y = 0.0;
    for (auto& v : x) {
      y = a * y + (1.0 - a) * v;
      v = y;
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  std::vector<float> out(n);
  const double g = peak > 0 ? kSynthPeak / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i] * g);
  return out;
}

}  // namespace doapnn
