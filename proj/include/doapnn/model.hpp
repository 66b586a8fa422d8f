// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Spatial-spectrum network (SSNet) and its progressive, task-incremental
// extension.
//
// One column is an SSNet feature extractor
//
//   (2M, F, T) -> conv3x3 /(2,1) -> relu -> conv3x3 /(2,1) -> relu
//              -> residual blocks (conv, affine, relu, conv, affine, +, relu)
//
// plus a 1x1 adapter. Column t's adapter reads the channel concatenation of
// the extractor maps of columns 1..t (the lateral connections), and its
// output is globally pooled and fed to a single 181-way head that every
// column shares. A standalone SSNet is simply a one-column model whose head
// stays trainable.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/rng.hpp"
#include "doapnn/spectrum.hpp"
#include "doapnn/tensor/ndarray.hpp"
#include "doapnn/tensor/tape.hpp"

namespace doapnn {

inline constexpr int kMaxResidualBlocks = 5;

struct SsnetConfig {
  int in_channels = 4;  // 2M
  int conv1 = 32;
  int conv2 = 64;
  int width = 64;  // residual width C
  int blocks = kMaxResidualBlocks;
  int kernel = 3;
  Hw freq_stride{2, 1};

  void validate() const {
    if (in_channels < 1 || conv1 < 1 || conv2 < 1 || width < 1)
      throw ConfigError("ssnet widths must be positive");
    if (conv2 != width)
      throw ConfigError("ssnet conv2 width (" + std::to_string(conv2) +
                        ") must equal the residual width (" +
                        std::to_string(width) + ")");
    if (blocks < 1 || blocks > kMaxResidualBlocks)
      throw ConfigError("residual block count must be in [1, 5], got " +
                        std::to_string(blocks));
    if (kernel < 1 || kernel % 2 == 0)
      throw ConfigError("kernel must be odd and positive");
  }

  friend bool operator==(const SsnetConfig& a, const SsnetConfig& b) {
    return a.in_channels == b.in_channels && a.conv1 == b.conv1 &&
           a.conv2 == b.conv2 && a.width == b.width && a.blocks == b.blocks &&
           a.kernel == b.kernel && a.freq_stride.h == b.freq_stride.h &&
           a.freq_stride.w == b.freq_stride.w;
  }
};

// Gap-aware scaling: residual depth from the smallest acceptable angular
// error. 1 degree keeps all five blocks, 5 degrees or coarser keeps one.
inline int scale_blocks(double tolerance_deg) {
  if (!(tolerance_deg >= 1.0))
    throw InputError("tolerance must be >= 1 degree");
  const int n = static_cast<int>(std::ceil(kMaxResidualBlocks / tolerance_deg - 1e-12));
  return std::clamp(n, 1, kMaxResidualBlocks);
}

enum class HeadPolicy {
  kFrozenAfterFirst,  // the head trains with column 1, then freezes with it
  kTrainable,         // the head keeps training on every task
};

inline std::string to_string(HeadPolicy p) {
  return p == HeadPolicy::kFrozenAfterFirst ? "frozen" : "trainable";
}
inline HeadPolicy head_policy_from_string(const std::string& s) {
  if (s == "frozen") return HeadPolicy::kFrozenAfterFirst;
  if (s == "trainable") return HeadPolicy::kTrainable;
  throw ConfigError("unknown head policy '" + s + "'");
}

// ---------------------------------------------------------------------------
// Closed-form parameter counts.

inline std::size_t conv_param_count(std::size_t cin, std::size_t cout,
                                    std::size_t kh, std::size_t kw) {
  return cin * cout * kh * kw + cout;
}
inline std::size_t linear_param_count(std::size_t n, std::size_t m) {
  return n * m + m;
}
inline std::size_t affine_param_count(std::size_t c) { return 2 * c; }

inline std::size_t extractor_param_count(const SsnetConfig& c, int blocks) {
  const std::size_t k = static_cast<std::size_t>(c.kernel);
  const std::size_t w = static_cast<std::size_t>(c.width);
  const std::size_t block =
      2 * conv_param_count(w, w, k, k) + 2 * affine_param_count(w);
  return conv_param_count(c.in_channels, c.conv1, k, k) +
         conv_param_count(c.conv1, c.conv2, k, k) +
         static_cast<std::size_t>(blocks) * block;
}
inline std::size_t adapter_param_count(const SsnetConfig& c, int task_id) {
  const std::size_t w = static_cast<std::size_t>(c.width);
  return conv_param_count(static_cast<std::size_t>(task_id) * w, w, 1, 1);
}
inline std::size_t head_param_count(const SsnetConfig& c) {
  return linear_param_count(static_cast<std::size_t>(c.width), kNumAzimuths);
}
// A standalone SSNet: one full column plus the head.
inline std::size_t ssnet_param_count(const SsnetConfig& c) {
  return extractor_param_count(c, c.blocks) + adapter_param_count(c, 1) +
         head_param_count(c);
}

struct ParamBreakdown {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> components;

  void add(std::string name, std::size_t n) {
    components.emplace_back(std::move(name), n);
    total += n;
  }
};

// ---------------------------------------------------------------------------

template <class T>
class ProgressiveModel {
 public:
  struct Block {
    Parameter<T>*conv_a_w, *conv_a_b, *scale_a, *shift_a;
    Parameter<T>*conv_b_w, *conv_b_b, *scale_b, *shift_b;
  };
  struct Column {
    int task_id = 0;
    int blocks = 0;
    Parameter<T>*conv1_w = nullptr, *conv1_b = nullptr;
    Parameter<T>*conv2_w = nullptr, *conv2_b = nullptr;
    std::vector<Block> res;
    Parameter<T>*adapter_w = nullptr, *adapter_b = nullptr;
    std::vector<Parameter<T>*> params;

    bool frozen() const {
      return std::all_of(params.begin(), params.end(),
                         [](const Parameter<T>* p) { return p->frozen; });
    }
  };

  // Empty model: head only. Columns arrive through add_column.
  ProgressiveModel(SsnetConfig cfg, double tolerance, HeadPolicy policy,
                   std::uint64_t seed)
      : cfg_(cfg), tolerance_(tolerance), policy_(policy) {
    cfg_.validate();
    scale_blocks(tolerance_);
    Rng rng(derive_seed(seed, {0xead}));
    make_head(&rng);
  }

  ProgressiveModel(ProgressiveModel&&) noexcept = default;
  ProgressiveModel& operator=(ProgressiveModel&&) noexcept = default;

  const SsnetConfig& config() const { return cfg_; }
  double tolerance() const { return tolerance_; }
  HeadPolicy head_policy() const { return policy_; }
  std::size_t num_columns() const { return columns_.size(); }
  const Column& column(std::size_t i) const { return columns_.at(i); }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  bool head_frozen() const { return head_w_->frozen; }

  int blocks_for_task(int task_id) const {
    return task_id == 1 ? cfg_.blocks : scale_blocks(tolerance_);
  }

  // Freezes every existing column (and, under the frozen head policy, the
  // head), then appends a randomly initialized column for task_id.
  void add_column(int task_id, std::uint64_t seed) {
    if (task_id != static_cast<int>(columns_.size()) + 1)
      throw StateError("add_column(" + std::to_string(task_id) +
                       ") but the model has " + std::to_string(columns_.size()) +
                       " columns");
    for (auto& c : columns_)
      for (auto* p : c.params) p->frozen = true;
    if (policy_ == HeadPolicy::kFrozenAfterFirst && task_id >= 2) {
      head_w_->frozen = true;
      head_b_->frozen = true;
    }
    Rng rng(seed);
    make_column(task_id, blocks_for_task(task_id), &rng);
  }

  // Runs columns 1..task_id and returns the 181-point spectrum node.
  typename Tape<T>::Var forward(Tape<T>& tape, int task_id,
                                typename Tape<T>::Var input) const {
    if (task_id < 1 || task_id > static_cast<int>(columns_.size()))
      throw RoutingError("no column for task " + std::to_string(task_id) +
                         " (model has " + std::to_string(columns_.size()) + ")");
    using Var = typename Tape<T>::Var;
    std::vector<Var> maps;
    for (int t = 1; t <= task_id; ++t)
      maps.push_back(extract(tape, columns_[t - 1], input));
    const Column& col = columns_[task_id - 1];
    Var fused = tape.concat_channels(maps);
    Var adapted = tape.relu(
        tape.conv2d(fused, tape.param(*col.adapter_w), tape.param(*col.adapter_b)));
    Var pooled = tape.global_avg_pool(adapted);
    Var logits =
        tape.linear(pooled, tape.param(*head_w_), tape.param(*head_b_));
    return tape.sigmoid(logits);
  }

  SpatialSpectrum predict(int task_id, const NdArray<T>& feature) const {
    Tape<T> tape(false);
    auto out = forward(tape, task_id, tape.input(feature));
    const auto& v = tape.value(out);
    SpatialSpectrum s{};
    for (std::size_t i = 0; i < kNumAzimuths; ++i) s[i] = static_cast<float>(v[i]);
    return s;
  }

  // Closed-form count, per component.
  ParamBreakdown param_count() const {
    ParamBreakdown b;
    for (const auto& c : columns_) {
      const std::string p = "col" + std::to_string(c.task_id);
      b.add(p + ".extractor", extractor_param_count(cfg_, c.blocks));
      b.add(p + ".adapter", adapter_param_count(cfg_, c.task_id));
    }
    b.add("head", head_param_count(cfg_));
    return b;
  }

  // Same structure and values in another scalar type.
  template <class U>
  ProgressiveModel<U> cast() const {
    ProgressiveModel<U> out(cfg_, tolerance_, policy_, 0);
    for (const auto& c : columns_) out.append_uninitialized_column(c.task_id, c.blocks);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = params_[i];
      auto& dst = out.params().get(src.name);
      dst.value = src.value.template cast<U>();
      dst.frozen = src.frozen;
    }
    return out;
  }

  // Structural rebuild without random init, used by cast and checkpoint
  // loading; parameter values must be filled in afterwards.
  void append_uninitialized_column(int task_id, int blocks) {
    if (task_id != static_cast<int>(columns_.size()) + 1)
      throw StateError("non-sequential column " + std::to_string(task_id));
    if (blocks < 1 || blocks > kMaxResidualBlocks)
      throw ConfigError("column block count out of range");
    make_column(task_id, blocks, nullptr);
  }

 private:
  template <class U>
  friend class ProgressiveModel;

  NdArray<T> init_array(Shape shape, std::size_t fan_in, Rng* rng) const {
    NdArray<T> a(std::move(shape));
    if (!rng) return a;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : a.values()) v = static_cast<T>(rng->uniform(-bound, bound));
    return a;
  }

  Parameter<T>* add_conv_weight(const std::string& name, std::size_t cout,
                                std::size_t cin, std::size_t k, Rng* rng) {
    return &params_.add(name, init_array({cout, cin, k, k}, cin * k * k, rng));
  }
  Parameter<T>* add_zeros(const std::string& name, std::size_t n) {
    return &params_.add(name, NdArray<T>({n}));
  }
  Parameter<T>* add_ones(const std::string& name, std::size_t n) {
    return &params_.add(name, NdArray<T>({n}, T{1}));
  }

  void make_head(Rng* rng) {
    const auto c = static_cast<std::size_t>(cfg_.width);
    head_w_ = &params_.add("head.weight", init_array({kNumAzimuths, c}, c, rng));
    head_b_ = add_zeros("head.bias", kNumAzimuths);
  }

  void make_column(int task_id, int blocks, Rng* rng) {
    Column col;
    col.task_id = task_id;
    col.blocks = blocks;
    const std::string p = "col" + std::to_string(task_id) + ".";
    const auto k = static_cast<std::size_t>(cfg_.kernel);
    const auto c1 = static_cast<std::size_t>(cfg_.conv1);
    const auto c2 = static_cast<std::size_t>(cfg_.conv2);
    const auto w = static_cast<std::size_t>(cfg_.width);
    col.conv1_w = add_conv_weight(p + "conv1.weight", c1, cfg_.in_channels, k, rng);
    col.conv1_b = add_zeros(p + "conv1.bias", c1);
    col.conv2_w = add_conv_weight(p + "conv2.weight", c2, c1, k, rng);
    col.conv2_b = add_zeros(p + "conv2.bias", c2);
    for (int b = 0; b < blocks; ++b) {
      const std::string q = p + "block" + std::to_string(b) + ".";
      Block blk;
      blk.conv_a_w = add_conv_weight(q + "conv_a.weight", w, w, k, rng);
      blk.conv_a_b = add_zeros(q + "conv_a.bias", w);
      blk.scale_a = add_ones(q + "affine_a.scale", w);
      blk.shift_a = add_zeros(q + "affine_a.shift", w);
      blk.conv_b_w = add_conv_weight(q + "conv_b.weight", w, w, k, rng);
      blk.conv_b_b = add_zeros(q + "conv_b.bias", w);
      blk.scale_b = add_ones(q + "affine_b.scale", w);
      blk.shift_b = add_zeros(q + "affine_b.shift", w);
      col.res.push_back(blk);
    }
    const std::size_t fan = static_cast<std::size_t>(task_id) * w;
    col.adapter_w = add_conv_weight(p + "adapter.weight", w, fan, 1, rng);
    col.adapter_b = add_zeros(p + "adapter.bias", w);

    col.params = {col.conv1_w, col.conv1_b, col.conv2_w, col.conv2_b};
    for (const auto& blk : col.res)
      col.params.insert(col.params.end(),
                        {blk.conv_a_w, blk.conv_a_b, blk.scale_a, blk.shift_a,
                         blk.conv_b_w, blk.conv_b_b, blk.scale_b, blk.shift_b});
    col.params.push_back(col.adapter_w);
    col.params.push_back(col.adapter_b);
    columns_.push_back(std::move(col));
  }

  typename Tape<T>::Var extract(Tape<T>& tape, const Column& col,
                                typename Tape<T>::Var x) const {
    const std::size_t pad = static_cast<std::size_t>(cfg_.kernel / 2);
    const Hw same{pad, pad};
    auto p = [&](Parameter<T>* q) { return tape.param(*q); };
    x = tape.relu(tape.conv2d(x, p(col.conv1_w), p(col.conv1_b),
                              cfg_.freq_stride, same));
    x = tape.relu(tape.conv2d(x, p(col.conv2_w), p(col.conv2_b),
                              cfg_.freq_stride, same));
    for (const auto& b : col.res) {
      auto h = tape.conv2d(x, p(b.conv_a_w), p(b.conv_a_b), {1, 1}, same);
      h = tape.relu(tape.affine(h, p(b.scale_a), p(b.shift_a)));
      h = tape.conv2d(h, p(b.conv_b_w), p(b.conv_b_b), {1, 1}, same);
      h = tape.affine(h, p(b.scale_b), p(b.shift_b));
      x = tape.relu(tape.add(x, h));
    }
    return x;
  }

  SsnetConfig cfg_;
  double tolerance_;
  HeadPolicy policy_;
  ParamStore<T> params_;
  std::vector<Column> columns_;
  Parameter<T>* head_w_ = nullptr;
  Parameter<T>* head_b_ = nullptr;
};

// A standalone SSNet (used by the finetune, joint and multicondition
// strategies): one full column with a trainable head.
template <class T = float>
ProgressiveModel<T> build_ssnet(const SsnetConfig& cfg, std::uint64_t seed) {
  ProgressiveModel<T> m(cfg, 1.0, HeadPolicy::kTrainable, seed);
  m.add_column(1, derive_seed(seed, {1}));
  return m;
}

// A progressive model whose first column matches build_ssnet(cfg, seed).
template <class T = float>
ProgressiveModel<T> build_progressive(const SsnetConfig& cfg, double tolerance,
                                      HeadPolicy policy, std::uint64_t seed) {
  return ProgressiveModel<T>(cfg, tolerance, policy, seed);
}

// Seed for column task_id given a run's base seed.
inline std::uint64_t column_seed(std::uint64_t base, int task_id) {
  return derive_seed(base, {static_cast<std::uint64_t>(task_id)});
}

}  // namespace doapnn
