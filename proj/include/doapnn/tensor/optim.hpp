// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/tensor/ndarray.hpp"

namespace doapnn {

// lr(epoch) = base * gamma^floor(epoch / step_size)
struct LrSchedule {
  double base_lr = 1e-3;
  int step_size = 20;
  double gamma = 0.5;

  double at(int epoch) const {
    if (epoch < 0) epoch = 0;
    return base_lr * std::pow(gamma, epoch / step_size);
  }

  void validate() const {
    if (!(base_lr > 0)) throw ConfigError("learning rate must be positive");
    if (step_size < 1) throw ConfigError("lr step size must be >= 1");
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("lr gamma must be in (0,1]");
  }
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
// address, so one optimizer must stay paired with one parameter set.
template <class T>
class AdamW {
 public:
  AdamW(LrSchedule schedule, AdamWOptions opts = {})
      : schedule_(schedule), opts_(opts) {
    schedule_.validate();
  }

  const LrSchedule& schedule() const { return schedule_; }
  const AdamWOptions& options() const { return opts_; }
  std::int64_t step_count() const { return steps_; }

  void step(std::span<Parameter<T>* const> params, int epoch) {
    for (const auto* p : params)
      if (!p->frozen && !p->has_grad)
        throw StateError("optimizer step on '" + p->name +
                         "' without a fresh gradient");
    ++steps_;
    const double lr = schedule_.at(epoch);
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    const T decay = static_cast<T>(1.0 - lr * opts_.weight_decay);
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(opts_.epsilon);
    for (auto* p : params) {
      if (p->frozen) continue;
      auto& st = state_[p];
      if (st.m.size() != p->value.size()) {
        st.m.assign(p->value.size(), T{0});
        st.v.assign(p->value.size(), T{0});
      }
      T* w = p->value.data();
      const T* g = p->grad.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        st.m[i] = b1 * st.m[i] + (T{1} - b1) * g[i];
        st.v[i] = b2 * st.v[i] + (T{1} - b2) * g[i] * g[i];
        w[i] *= decay;
        w[i] -= step_size * st.m[i] / (std::sqrt(st.v[i]) * inv_sqrt_bc2 + eps);
      }
      p->has_grad = false;
    }
  }

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  LrSchedule schedule_;
  AdamWOptions opts_;
  std::int64_t steps_ = 0;
  std::unordered_map<const Parameter<T>*, Moments> state_;
};

}  // namespace doapnn
