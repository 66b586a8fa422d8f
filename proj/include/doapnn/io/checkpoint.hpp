// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Binary model container, all integers little-endian:
//
//   "DOAPNN1"                       7 bytes
//   u32 version                     currently 1
//   u32 n, n bytes                  config text (sorted key = value lines)
//   u32 count                       number of arrays
//   count x {
//     u32 n, n bytes                parameter name
//     u32 ndim, ndim x u64          shape
//     prod(shape) x f32             values
//   }
//
// Arrays appear in the model's parameter order, so saving is byte-for-byte
// deterministic.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "doapnn/errors.hpp"
#include "doapnn/io/config.hpp"
#include "doapnn/model.hpp"

namespace doapnn {

inline constexpr char kCheckpointMagic[] = "DOAPNN1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ProgressiveModel<float> model;
  Config meta;  // everything in the config text that is not model.*
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }
  void str(const std::string& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    s_ += v;
  }
  void raw(const char* p, std::size_t n) { s_.append(p, n); }
  const std::string& bytes() const { return s_; }

 private:
  std::string s_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& s) : s_(s) {}
  bool has(std::size_t n) const { return pos_ + n <= s_.size(); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string take(std::size_t n) {
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Model structure as config text keys under "model.".
inline Config model_structure(const ProgressiveModel<float>& m) {
  Config c;
  const auto& n = m.config();
  c.set("model.in_channels", std::to_string(n.in_channels));
  c.set("model.conv1", std::to_string(n.conv1));
  c.set("model.conv2", std::to_string(n.conv2));
  c.set("model.width", std::to_string(n.width));
  c.set("model.kernel", std::to_string(n.kernel));
  c.set("model.blocks", std::to_string(n.blocks));
  c.set("model.freq_stride_h", std::to_string(n.freq_stride.h));
  c.set("model.freq_stride_w", std::to_string(n.freq_stride.w));
  c.set("model.tolerance", detail::fmt_double(m.tolerance()));
  c.set("model.head_policy", to_string(m.head_policy()));
  c.set("model.head.frozen", m.head_frozen() ? "1" : "0");
  c.set("model.columns", std::to_string(m.num_columns()));
  for (std::size_t i = 0; i < m.num_columns(); ++i) {
    const auto& col = m.column(i);
    const std::string p = "model.column." + std::to_string(col.task_id) + ".";
    c.set(p + "blocks", std::to_string(col.blocks));
    c.set(p + "frozen", col.frozen() ? "1" : "0");
  }
  return c;
}

inline std::string encode_checkpoint(const ProgressiveModel<float>& model,
                                     const Config& meta = {}) {
  Config text;
  for (const auto& [k, v] : meta.values())
    if (k.rfind("model.", 0) != 0) text.set(k, v);
  text.merge(model_structure(model));
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 7);
  w.u32(kCheckpointVersion);
  w.str(text.to_text());
  const auto& ps = model.params();
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& p = ps[i];
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.ndim()));
    for (auto d : p.value.shape()) w.u64(d);
    for (float v : p.value.values()) w.f32(v);
  }
  return w.bytes();
}

inline void save_checkpoint(const ProgressiveModel<float>& model,
                            const std::string& path, const Config& meta = {}) {
  const auto bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": write failed");
}

inline Checkpoint decode_checkpoint(const std::string& bytes,
                                    const std::string& origin = "checkpoint") {
  detail::ByteReader r(bytes);
  if (!r.has(7) || r.take(7) != std::string(kCheckpointMagic, 7))
    throw IncompatibleError(origin + ": bad magic, not a DOAPNN1 checkpoint");
  if (!r.has(4)) throw CorruptionError(origin + ": truncated before version");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw IncompatibleError(origin + ": unsupported format version " +
                            std::to_string(version));
  if (!r.has(4)) throw CorruptionError(origin + ": truncated config length");
  const auto text_len = r.u32();
  if (!r.has(text_len)) throw CorruptionError(origin + ": truncated config text");
  const Config text = Config::parse(r.take(text_len), origin);

  SsnetConfig net;
  net.in_channels = static_cast<int>(text.get_int("model.in_channels", 4));
  net.conv1 = static_cast<int>(text.get_int("model.conv1", 32));
  net.conv2 = static_cast<int>(text.get_int("model.conv2", 64));
  net.width = static_cast<int>(text.get_int("model.width", 64));
  net.kernel = static_cast<int>(text.get_int("model.kernel", 3));
  net.blocks = static_cast<int>(text.get_int("model.blocks", 5));
  net.freq_stride.h = static_cast<std::size_t>(text.get_int("model.freq_stride_h", 2));
  net.freq_stride.w = static_cast<std::size_t>(text.get_int("model.freq_stride_w", 1));
  ProgressiveModel<float> model(net, text.get_double("model.tolerance", 1.0),
                                head_policy_from_string(text.require("model.head_policy")),
                                0);
  const auto columns = text.get_int("model.columns", 0);
  for (long long t = 1; t <= columns; ++t) {
    const std::string p = "model.column." + std::to_string(t) + ".";
    model.append_uninitialized_column(static_cast<int>(t),
                                      static_cast<int>(text.get_int(p + "blocks", 0)));
  }

  if (!r.has(4)) throw CorruptionError(origin + ": truncated array count");
  const auto count = r.u32();
  if (count != model.params().size())
    throw CorruptionError(origin + ": " + std::to_string(count) +
                          " arrays but the model structure needs " +
                          std::to_string(model.params().size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = origin + ": array #" + std::to_string(i);
    if (!r.has(4)) throw CorruptionError(where + " truncated (name length)");
    const auto name_len = r.u32();
    if (!r.has(name_len)) throw CorruptionError(where + " truncated (name)");
    const auto name = r.take(name_len);
    auto* p = model.params().find(name);
    if (!p) throw CorruptionError(where + " '" + name + "' is not a model parameter");
    if (!r.has(4)) throw CorruptionError(origin + ": array '" + name + "' truncated (ndim)");
    const auto ndim = r.u32();
    if (!r.has(8ull * ndim))
      throw CorruptionError(origin + ": array '" + name + "' truncated (shape)");
    Shape shape(ndim);
    for (auto& d : shape) d = r.u64();
    if (shape != p->value.shape())
      throw CorruptionError(origin + ": array '" + name + "' has shape " +
                            shape_str(shape) + ", expected " +
                            shape_str(p->value.shape()));
    if (!r.has(4 * p->value.size()))
      throw CorruptionError(origin + ": array '" + name + "' truncated (payload)");
    for (auto& v : p->value.values()) v = r.f32();
  }
  if (r.pos() != bytes.size())
    throw CorruptionError(origin + ": trailing bytes after last array");

  for (long long t = 1; t <= columns; ++t) {
    const bool frozen = text.get_bool("model.column." + std::to_string(t) + ".frozen", false);
    for (auto* p : model.column(static_cast<std::size_t>(t - 1)).params) p->frozen = frozen;
  }
  const bool head_frozen = text.get_bool("model.head.frozen", false);
  model.params().get("head.weight").frozen = head_frozen;
  model.params().get("head.bias").frozen = head_frozen;

  Config meta;
  for (const auto& [k, v] : text.values())
    if (k.rfind("model.", 0) != 0) meta.set(k, v);
  return Checkpoint{std::move(model), std::move(meta)};
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return decode_checkpoint(bytes, path);
}

}  // namespace doapnn
