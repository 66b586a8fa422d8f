// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Task-incremental training harness. Each task is one microphone spacing;
// four strategies share the same training loop:
//
//   finetune        one SSNet trained on task 1, then 2, ... in sequence
//   joint           one SSNet trained once on the union of all tasks
//   multicondition  one separate SSNet per task
//   pnn             a progressive model, one new column per task
//
// The ledger matrix R[t][j] holds the report for task j after stage t.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "doapnn/errors.hpp"
#include "doapnn/io/dataset.hpp"
#include "doapnn/model.hpp"
#include "doapnn/rng.hpp"
#include "doapnn/spectrum.hpp"
#include "doapnn/tensor/optim.hpp"
#include "doapnn/tensor/tape.hpp"

namespace doapnn {

enum class Strategy { kFinetune, kJoint, kMulticondition, kPnn };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kFinetune: return "finetune";
    case Strategy::kJoint: return "joint";
    case Strategy::kMulticondition: return "multicondition";
    case Strategy::kPnn: return "pnn";
  }
  return "?";
}
inline Strategy strategy_from_string(const std::string& s) {
  if (s == "finetune") return Strategy::kFinetune;
  if (s == "joint") return Strategy::kJoint;
  if (s == "multicondition") return Strategy::kMulticondition;
  if (s == "pnn") return Strategy::kPnn;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct TrainConfig {
  Strategy strategy = Strategy::kPnn;
  int epochs = 100;
  int patience = 20;
  double min_delta = 1e-6;
  int batch_size = 16;
  LrSchedule schedule;
  AdamWOptions adamw;
  std::uint64_t seed = 0;
  SsnetConfig net;
  double tolerance = 5.0;
  HeadPolicy head_policy = HeadPolicy::kFrozenAfterFirst;
  Split eval_split = Split::kTest;
  int threads = 1;  // evaluation only; training is serial

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(min_delta >= 0)) throw ConfigError("min_delta must be >= 0");
    schedule.validate();
    net.validate();
    scale_blocks(tolerance);
  }

  std::uint64_t model_seed() const { return derive_seed(seed, {0x30de1}); }
  std::uint64_t stage_seed(int stage) const {
    return derive_seed(seed, {0x57a9e, static_cast<std::uint64_t>(stage)});
  }
};

// Patience counter over validation losses; improvement means
// loss < best - min_delta.
class EarlyStopper {
 public:
  enum class Decision { kContinue, kStop };

  explicit EarlyStopper(int patience, double min_delta = 1e-6)
      : patience_(patience), min_delta_(min_delta) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }

  Decision update(double val_loss) {
    ++seen_;
    improved_ = val_loss < best_ - min_delta_;
    if (improved_) {
      best_ = val_loss;
      best_epoch_ = seen_;
      counter_ = 0;
    } else {
      ++counter_;
    }
    return counter_ >= patience_ ? Decision::kStop : Decision::kContinue;
  }

  bool improved() const { return improved_; }
  int counter() const { return counter_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any
  int epochs_seen() const { return seen_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int counter_ = 0;
  int seen_ = 0;
  bool improved_ = false;
};

struct TaskSpec {
  int task_id = 0;
  double spacing = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct StageFit {
  double initial_train_loss = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
};

struct TaskEval {
  int task_id = 0;
  EvalReport report;
  double loss = 0;  // mean mse over the split
};

struct StageRecord {
  int stage = 0;
  std::vector<int> trained_tasks;
  std::uint64_t seed = 0;
  StageFit fit;
  std::size_t new_params = 0;    // allocated during this stage
  std::size_t total_params = 0;  // over every model alive after this stage
  std::vector<TaskEval> evals;   // R[stage][j]
  double cumulative_loss = 0;    // sum of the evals' losses
};

struct RunLedger {
  TrainConfig config;
  std::vector<TaskSpec> tasks;
  std::vector<StageRecord> stages;
  std::vector<double> stage_seconds;  // wall clock, kept apart from the rest

  // nullptr when R[t][j] was not evaluated.
  const TaskEval* at(int stage, int task_id) const {
    if (stage < 1 || stage > static_cast<int>(stages.size())) return nullptr;
    for (const auto& e : stages[stage - 1].evals)
      if (e.task_id == task_id) return &e;
    return nullptr;
  }
};

using ExampleRefs = std::vector<const Example*>;

inline ExampleRefs refs(const std::vector<Example>& xs) {
  ExampleRefs r;
  for (const auto& x : xs) r.push_back(&x);
  return r;
}

// Forward-only pass; returns per-example predictions and mean loss.
inline TaskEval evaluate_examples(const ProgressiveModel<float>& model, int route,
                                  const ExampleRefs& xs, int threads = 1) {
  if (xs.empty()) throw DataError("evaluation split is empty");
  std::vector<int> pred(xs.size()), truth(xs.size());
  std::vector<double> loss(xs.size());
  parallel_for(xs.size(), threads, [&](std::size_t i) {
    const auto s = model.predict(route, xs[i]->feature);
    pred[i] = decode_angle(s);
    truth[i] = xs[i]->azimuth;
    loss[i] = mse_loss(s, xs[i]->target);
  });
  TaskEval e;
  e.report = evaluate(pred, truth);
  double acc = 0;
  for (double l : loss) acc += l;
  e.loss = acc / static_cast<double>(xs.size());
  return e;
}

inline TaskEval evaluate_task(const ProgressiveModel<float>& model, int route,
                              const TaskData& task, Split split, int threads = 1) {
  const auto& xs = task.split(split);
  if (xs.empty())
    throw DataError("task " + std::to_string(task.task_id) + " has no " +
                    to_string(split) + " examples");
  auto e = evaluate_examples(model, route, refs(xs), threads);
  e.task_id = task.task_id;
  return e;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minimizes mse over `train` for the model's `route` column, with AdamW,
// StepLR, and early stopping on `val`. The parameters of the best
// validation epoch are restored before returning.
inline StageFit train_task(ProgressiveModel<float>& model, int route,
                           const ExampleRefs& train, const ExampleRefs& val,
                           const TrainConfig& cfg, std::uint64_t stage_seed,
                           const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("empty training split");
  if (val.empty()) throw DataError("empty validation split");
  auto trainable = model.params().trainable();
  if (trainable.empty()) throw StateError("no trainable parameters");

  StageFit fit;
  fit.initial_train_loss = evaluate_examples(model, route, train, cfg.threads).loss;

  AdamW<float> opt(cfg.schedule, cfg.adamw);
  EarlyStopper stopper(cfg.patience, cfg.min_delta);
  std::vector<NdArray<float>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : trainable) best.push_back(p->value);
  };
  snapshot();

  std::vector<std::size_t> order(train.size());
  NdArray<float> target({kNumAzimuths});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(stage_seed, {static_cast<std::uint64_t>(epoch)}));
    shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const float seed = 1.0f / static_cast<float>(end - start);
      model.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = *train[order[k]];
        std::copy(ex.target.begin(), ex.target.end(), target.values().begin());
        Tape<float> tape;
        auto y = model.forward(tape, route, tape.input(ex.feature));
        auto loss = tape.mse(y, tape.input(target));
        const double lv = tape.value(loss)[0];
        if (!std::isfinite(lv))
          throw TrainingError("non-finite training loss at epoch " +
                              std::to_string(epoch + 1) + ", example " +
                              std::to_string(order[k]));
        epoch_loss += lv;
        tape.backward(loss, seed);
      }
      opt.step(trainable, epoch);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_loss = evaluate_examples(model, route, val, cfg.threads).loss;
    rec.lr = cfg.schedule.at(epoch);
    fit.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const auto decision = stopper.update(rec.val_loss);
    if (stopper.improved()) snapshot();
    if (decision == EarlyStopper::Decision::kStop) {
      fit.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i]->value = best[i];
  fit.best_epoch = stopper.best_epoch();
  fit.best_val_loss = stopper.best();
  return fit;
}

struct RunResult {
  RunLedger ledger;
  // One model, except multicondition which keeps one per task.
  std::vector<ProgressiveModel<float>> models;
};

struct RunHooks {
  std::function<void(int stage, int task_id)> on_stage_begin;
  EpochCallback on_epoch;
  // Called after each stage with the model that stage trained.
  std::function<void(const StageRecord&, const ProgressiveModel<float>&)> on_stage_end;
};

inline void check_tasks(const std::vector<TaskData>& tasks) {
  if (tasks.empty()) throw ConfigError("no tasks");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].task_id != static_cast<int>(i) + 1)
      throw ConfigError("task ids must run 1..T in order; position " +
                        std::to_string(i + 1) + " holds task " +
                        std::to_string(tasks[i].task_id));
    for (std::size_t j = 0; j < i; ++j)
      if (tasks[i].spacing == tasks[j].spacing)
        throw ConfigError("tasks " + std::to_string(j + 1) + " and " +
                          std::to_string(i + 1) + " share a spacing");
  }
}

inline RunResult run_sequence(const std::vector<TaskData>& tasks, const TrainConfig& cfg,
                              const RunHooks& hooks = {}) {
  cfg.validate();
  check_tasks(tasks);
  RunResult out;
  out.ledger.config = cfg;
  for (const auto& t : tasks) out.ledger.tasks.push_back({t.task_id, t.spacing});
  const int n_tasks = static_cast<int>(tasks.size());

  std::size_t prev_total = 0;
  auto total_params = [&] {
    std::size_t n = 0;
    for (const auto& m : out.models) n += m.params().scalar_count();
    return n;
  };
  auto finish = [&](StageRecord& st, const ProgressiveModel<float>& trained,
                    double seconds) {
    st.total_params = total_params();
    st.new_params = st.total_params - prev_total;
    prev_total = st.total_params;
    for (const auto& e : st.evals) st.cumulative_loss += e.loss;
    out.ledger.stages.push_back(st);
    out.ledger.stage_seconds.push_back(seconds);
    if (hooks.on_stage_end) hooks.on_stage_end(out.ledger.stages.back(), trained);
  };
  using Clock = std::chrono::steady_clock;
  auto secs = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  switch (cfg.strategy) {
    case Strategy::kJoint: {
      const auto t0 = Clock::now();
      if (hooks.on_stage_begin) hooks.on_stage_begin(1, 0);
      out.models.push_back(build_ssnet<float>(cfg.net, cfg.model_seed()));
      auto& m = out.models.back();
      ExampleRefs train, val;
      for (const auto& t : tasks) {
        for (const auto& x : t.train) train.push_back(&x);
        for (const auto& x : t.val) val.push_back(&x);
      }
      StageRecord st;
      st.stage = 1;
      for (const auto& t : tasks) st.trained_tasks.push_back(t.task_id);
      st.seed = cfg.stage_seed(1);
      st.fit = train_task(m, 1, train, val, cfg, st.seed, hooks.on_epoch);
      for (const auto& t : tasks)
        st.evals.push_back(evaluate_task(m, 1, t, cfg.eval_split, cfg.threads));
      finish(st, m, secs(t0));
      break;
    }
    case Strategy::kFinetune:
    case Strategy::kPnn:
    case Strategy::kMulticondition: {
      const bool pnn = cfg.strategy == Strategy::kPnn;
      const bool multi = cfg.strategy == Strategy::kMulticondition;
      if (pnn)
        out.models.push_back(build_progressive<float>(cfg.net, cfg.tolerance,
                                                      cfg.head_policy, cfg.model_seed()));
      else if (!multi)
        out.models.push_back(build_ssnet<float>(cfg.net, cfg.model_seed()));
      for (int t = 1; t <= n_tasks; ++t) {
        const auto t0 = Clock::now();
        if (hooks.on_stage_begin) hooks.on_stage_begin(t, t);
        const auto& task = tasks[t - 1];
        if (pnn) out.models[0].add_column(t, column_seed(cfg.model_seed(), t));
        if (multi)
          out.models.push_back(build_ssnet<float>(
              cfg.net, derive_seed(cfg.model_seed(), {0x3c, static_cast<std::uint64_t>(t)})));
        auto& m = multi ? out.models.back() : out.models[0];
        const int route = pnn ? t : 1;
        StageRecord st;
        st.stage = t;
        st.trained_tasks = {t};
        st.seed = cfg.stage_seed(t);
        st.fit = train_task(m, route, refs(task.train), refs(task.val), cfg, st.seed,
                            hooks.on_epoch);
        if (multi) {
          st.evals.push_back(evaluate_task(m, 1, task, cfg.eval_split, cfg.threads));
        } else {
          for (int j = 1; j <= t; ++j)
            st.evals.push_back(evaluate_task(m, pnn ? j : 1, tasks[j - 1],
                                             cfg.eval_split, cfg.threads));
        }
        finish(st, m, secs(t0));
      }
      break;
    }
  }
  return out;
}

}  // namespace doapnn
