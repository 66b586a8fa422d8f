// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// RIFF/WAVE reader (PCM16, float32; mono or stereo) and PCM16 writer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"

namespace doapnn {

struct WavData {
  int sample_rate = 0;
  std::vector<std::vector<float>> channels;

  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Decodes a RIFF/WAVE byte buffer. PCM16 maps n -> n / 32768.
inline WavData parse_wav(const std::string& bytes, const std::string& what = "wav") {
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(b, "RIFF", 4) != 0)
    throw FormatError(what + ": missing RIFF header");
  if (std::memcmp(b + 8, "WAVE", 4) != 0)
    throw FormatError(what + ": RIFF form type is not WAVE");
  std::size_t pos = 12;
  int format = -1, channels = 0, bits = 0, rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::le32(b + pos + 4);
    const unsigned char* body = b + pos + 8;
    if (pos + 8 + size > n)
      throw FormatError(what + ": chunk '" + std::string(bytes, pos, 4) +
                        "' runs past end of file");
    if (std::memcmp(b + pos, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(what + ": fmt chunk too short");
      format = detail::le16(body);
      channels = detail::le16(body + 2);
      rate = static_cast<int>(detail::le32(body + 4));
      bits = detail::le16(body + 14);
      if (format == 0xfffe && size >= 26) format = detail::le16(body + 24);
    } else if (std::memcmp(b + pos, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (format < 0) throw FormatError(what + ": missing fmt chunk");
  if (!data) throw FormatError(what + ": missing data chunk");
  if (channels < 1 || channels > 2)
    throw FormatError(what + ": unsupported channel count " + std::to_string(channels));
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw FormatError(what + ": unsupported codec (format " + std::to_string(format) +
                      ", " + std::to_string(bits) + " bits)");
  const std::size_t width = static_cast<std::size_t>(bits / 8);
  const std::size_t frames = data_size / (width * channels);
  WavData w;
  w.sample_rate = rate;
  w.channels.assign(channels, std::vector<float>(frames));
  for (std::size_t i = 0; i < frames; ++i)
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * width;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(detail::le16(p));
        w.channels[c][i] = static_cast<float>(v) / 32768.0f;
      } else {
        const std::uint32_t u = detail::le32(p);
        float f;
        std::memcpy(&f, &u, 4);
        w.channels[c][i] = f;
      }
    }
  return w;
}

// Reads a WAV file. When expected_rate > 0 and differs from the file's
// rate, throws (no resampling is done).
inline WavData read_wav(const std::string& path, int expected_rate = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto w = parse_wav(bytes, path);
  if (expected_rate > 0 && w.sample_rate != expected_rate)
    throw FormatError(path + ": sample_rate " + std::to_string(w.sample_rate) +
                      " != required " + std::to_string(expected_rate));
  return w;
}

// Inverse of the n / 32768 decode, clamped symmetrically to +-32767.
inline std::int16_t to_pcm16(float v) {
  const double s = std::clamp(static_cast<double>(v) * 32768.0, -32767.0, 32767.0);
  return static_cast<std::int16_t>(std::lround(s));
}

inline std::string encode_wav_pcm16(const std::vector<std::vector<float>>& channels,
                                    int rate) {
  if (channels.empty()) throw InputError("write_wav: no channels");
  const std::size_t frames = channels[0].size();
  for (const auto& c : channels)
    if (c.size() != frames) throw InputError("write_wav: ragged channels");
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * nch * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  detail::put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put32(s, 16);
  detail::put16(s, 1);
  detail::put16(s, nch);
  detail::put32(s, static_cast<std::uint32_t>(rate));
  detail::put32(s, static_cast<std::uint32_t>(rate) * nch * 2);
  detail::put16(s, static_cast<std::uint16_t>(nch * 2));
  detail::put16(s, 16);
  s += "data";
  detail::put32(s, data_bytes);
  for (std::size_t i = 0; i < frames; ++i)
    for (const auto& c : channels)
      detail::put16(s, static_cast<std::uint16_t>(to_pcm16(c[i])));
  return s;
}

inline void write_wav(const std::string& path,
                      const std::vector<std::vector<float>>& channels, int rate) {
  const auto bytes = encode_wav_pcm16(channels, rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace doapnn
