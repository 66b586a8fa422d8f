// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "oracles.hpp"

using namespace doapnn;

namespace {

// Toy examples on a (4, 12, 6) grid: an azimuth-dependent phase pattern
// plus noise, cheap enough to train in milliseconds.
Example toy_example(int azimuth, double spacing, Rng& rng) {
  Example e;
  e.feature = Tensor({4, 12, 6});
  const double phase = spacing * 40 * std::cos(azimuth * std::numbers::pi / 180);
  for (std::size_t k = 0; k < 12; ++k)
    for (std::size_t t = 0; t < 6; ++t) {
      const double w = phase * (k + 1) / 12;
      e.feature.at(0, k, t) = 1.0f;
      e.feature.at(1, k, t) = 0.0f;
      e.feature.at(2, k, t) = static_cast<float>(std::cos(w) + 0.05 * rng.normal());
      e.feature.at(3, k, t) = static_cast<float>(-std::sin(w) + 0.05 * rng.normal());
    }
  e.target = encode_spectrum(azimuth);
  e.azimuth = azimuth;
  return e;
}

TaskData toy_task(int id, double spacing, int step = 30, std::uint64_t seed = 1) {
  TaskData t;
  t.task_id = id;
  t.spacing = spacing;
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(id)}));
  for (int az = 0; az <= 180; az += step) {
    t.train.push_back(toy_example(az, spacing, rng));
    t.train.push_back(toy_example(az, spacing, rng));
    t.val.push_back(toy_example(az, spacing, rng));
    t.test.push_back(toy_example(az, spacing, rng));
  }
  return t;
}

std::vector<TaskData> toy_tasks(int n) {
  std::vector<TaskData> ts;
  for (int t = 1; t <= n; ++t) ts.push_back(toy_task(t, (5 + t - 1) / 100.0));
  return ts;
}

TrainConfig toy_config(Strategy s, int epochs = 3) {
  TrainConfig c;
  c.strategy = s;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 17;
  c.net = oracle::tiny_net();
  return c;
}

bool same(const TaskEval& a, const TaskEval& b) {
  return a.loss == b.loss && a.report.mae == b.report.mae && a.report.acc5 == b.report.acc5 &&
         a.report.acc10 == b.report.acc10 && a.report.acc15 == b.report.acc15;
}

}  // namespace

TEST(EarlyStopper, PatienceCountsNonImprovingEpochs) {
  EarlyStopper s(2);
  using D = EarlyStopper::Decision;
  EXPECT_EQ(s.update(1.0), D::kContinue);
  EXPECT_EQ(s.update(0.9), D::kContinue);
  EXPECT_EQ(s.update(0.95), D::kContinue);
  EXPECT_EQ(s.counter(), 1);
  EXPECT_EQ(s.update(0.8), D::kContinue);  // resets the counter
  EXPECT_EQ(s.counter(), 0);
  EXPECT_EQ(s.update(0.85), D::kContinue);
  EXPECT_EQ(s.update(0.8), D::kStop);  // equal is not better
  EXPECT_EQ(s.best_epoch(), 4);
  EXPECT_DOUBLE_EQ(s.best(), 0.8);
  EXPECT_EQ(s.epochs_seen(), 6);
}

TEST(EarlyStopper, MinDeltaThreshold) {
  EarlyStopper s(5, 1e-6);
  s.update(1.0);
  s.update(1.0 - 5e-7);
  EXPECT_FALSE(s.improved());
  s.update(1.0 - 2e-6);
  EXPECT_TRUE(s.improved());
  EXPECT_THROW(EarlyStopper(0), ConfigError);
}

TEST(Harness, TrainTaskRestoresBestEpoch) {
  const auto task = toy_task(1, 0.05);
  auto cfg = toy_config(Strategy::kFinetune, 8);
  auto m = build_ssnet<float>(cfg.net, 3);
  std::vector<EpochRecord> seen;
  const auto fit = train_task(m, 1, refs(task.train), refs(task.val), cfg, 5,
                              [&](const EpochRecord& r) { seen.push_back(r); });
  ASSERT_EQ(seen.size(), fit.epochs.size());
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (const auto& r : fit.epochs)
    if (r.val_loss < best - 1e-6) best = r.val_loss, best_epoch = r.epoch;
  EXPECT_EQ(fit.best_epoch, best_epoch);
  EXPECT_EQ(fit.best_val_loss, best);
  EXPECT_EQ(evaluate_examples(m, 1, refs(task.val)).loss, fit.best_val_loss);
}

TEST(Harness, LearningRateFollowsStepSchedule) {
  const auto task = toy_task(1, 0.05, 60);
  auto cfg = toy_config(Strategy::kFinetune, 5);
  cfg.schedule.step_size = 2;
  cfg.patience = 100;
  auto m = build_ssnet<float>(cfg.net, 3);
  const auto fit = train_task(m, 1, refs(task.train), refs(task.val), cfg, 5);
  ASSERT_EQ(fit.epochs.size(), 5u);
  const double base = cfg.schedule.base_lr;
  const double want[] = {base, base, base / 2, base / 2, base / 4};
  for (int e = 0; e < 5; ++e) EXPECT_DOUBLE_EQ(fit.epochs[e].lr, want[e]);
}

TEST(Harness, OverfitsSmallSet) {
  // 32 examples over 8 directions, 30 epochs: loss falls below a quarter
  // of its start.
  TaskData t;
  t.task_id = 1;
  t.spacing = 0.05;
  Rng rng(4);
  for (int i = 0; i < 32; ++i) t.train.push_back(toy_example((i % 8) * 25, 0.05, rng));
  auto cfg = toy_config(Strategy::kFinetune, 30);
  cfg.schedule.base_lr = 3e-3;
  cfg.patience = 30;
  auto m = build_ssnet<float>(cfg.net, 8);
  const auto fit = train_task(m, 1, refs(t.train), refs(t.train), cfg, 2);
  const double final_loss = evaluate_examples(m, 1, refs(t.train)).loss;
  EXPECT_LT(final_loss, 0.25 * fit.initial_train_loss)
      << final_loss << " vs initial " << fit.initial_train_loss;
}

TEST(Harness, NonFiniteLossThrows) {
  auto task = toy_task(1, 0.05, 90);
  task.train[1].feature.at(2, 3, 3) = std::numeric_limits<float>::quiet_NaN();
  auto cfg = toy_config(Strategy::kFinetune, 2);
  auto m = build_ssnet<float>(cfg.net, 3);
  EXPECT_THROW(train_task(m, 1, refs(task.train), refs(task.val), cfg, 5), TrainingError);
}

TEST(Harness, DeterministicRuns) {
  const auto tasks = toy_tasks(2);
  const auto cfg = toy_config(Strategy::kPnn, 2);
  const auto a = run_sequence(tasks, cfg), b = run_sequence(tasks, cfg);
  EXPECT_EQ(ledger_json(a.ledger, Config{}).dump(), ledger_json(b.ledger, Config{}).dump());
  for (std::size_t i = 0; i < a.models[0].params().size(); ++i)
    EXPECT_EQ(a.models[0].params()[i].value, b.models[0].params()[i].value);
}

TEST(Harness, PnnHasNoBackwardTransfer) {
  const auto tasks = toy_tasks(3);
  const auto cfg = toy_config(Strategy::kPnn, 2);
  std::vector<NdArray<float>> col1_after_stage1;
  RunHooks hooks;
  hooks.on_stage_end = [&](const StageRecord& st, const ProgressiveModel<float>& m) {
    if (st.stage == 1)
      for (auto* p : m.column(0).params) col1_after_stage1.push_back(p->value);
  };
  const auto r = run_sequence(tasks, cfg, hooks);
  const auto& l = r.ledger;
  ASSERT_EQ(l.stages.size(), 3u);
  for (int t = 1; t <= 3; ++t) {
    EXPECT_EQ(l.stages[t - 1].evals.size(), static_cast<std::size_t>(t));
    for (int j = 1; j < t; ++j) EXPECT_TRUE(same(*l.at(t, j), *l.at(j, j))) << t << "," << j;
  }
  const auto& col1 = r.models[0].column(0).params;
  for (std::size_t i = 0; i < col1.size(); ++i) EXPECT_EQ(col1[i]->value, col1_after_stage1[i]);
  EXPECT_EQ(l.stages[2].total_params, r.models[0].params().scalar_count());
  EXPECT_EQ(l.stages[0].new_params + l.stages[1].new_params + l.stages[2].new_params,
            l.stages[2].total_params);
}

TEST(Harness, FinetuneSharesStageOneWithPnn) {
  const auto tasks = toy_tasks(2);
  const auto f = run_sequence(tasks, toy_config(Strategy::kFinetune, 2));
  const auto p = run_sequence(tasks, toy_config(Strategy::kPnn, 2));
  EXPECT_TRUE(same(*f.ledger.at(1, 1), *p.ledger.at(1, 1)));
  EXPECT_EQ(f.ledger.stages[1].evals.size(), 2u);
  EXPECT_EQ(f.models.size(), 1u);
  // Finetuning has a fixed size.
  EXPECT_EQ(f.ledger.stages[1].new_params, 0u);
}

TEST(Harness, MulticonditionTrainsOneModelPerTask) {
  const auto tasks = toy_tasks(2);
  const auto cfg = toy_config(Strategy::kMulticondition, 2);
  const auto r = run_sequence(tasks, cfg);
  ASSERT_EQ(r.models.size(), 2u);
  EXPECT_EQ(r.ledger.stages[1].total_params, 2 * ssnet_param_count(cfg.net));
  ASSERT_EQ(r.ledger.stages[1].evals.size(), 1u);
  EXPECT_EQ(r.ledger.stages[1].evals[0].task_id, 2);
  EXPECT_EQ(r.ledger.at(2, 1), nullptr);
}

TEST(Harness, JointIsOneStageOverTheUnion) {
  const auto tasks = toy_tasks(3);
  const auto r = run_sequence(tasks, toy_config(Strategy::kJoint, 2));
  ASSERT_EQ(r.ledger.stages.size(), 1u);
  const auto& st = r.ledger.stages[0];
  EXPECT_EQ(st.trained_tasks, (std::vector<int>{1, 2, 3}));
  ASSERT_EQ(st.evals.size(), 3u);
  double sum = 0;
  for (const auto& e : st.evals) sum += e.loss;
  EXPECT_DOUBLE_EQ(st.cumulative_loss, sum);
}

TEST(Harness, RejectsMalformedTaskLists) {
  auto tasks = toy_tasks(2);
  tasks[1].spacing = tasks[0].spacing;
  EXPECT_THROW(run_sequence(tasks, toy_config(Strategy::kPnn)), ConfigError);
  tasks = toy_tasks(2);
  std::swap(tasks[0], tasks[1]);
  EXPECT_THROW(run_sequence(tasks, toy_config(Strategy::kPnn)), ConfigError);
  auto cfg = toy_config(Strategy::kPnn);
  cfg.epochs = 0;
  EXPECT_THROW(run_sequence(toy_tasks(1), cfg), ConfigError);
}

TEST(Report, LedgerOutputsAreStable) {
  const auto tasks = toy_tasks(2);
  const auto r = run_sequence(tasks, toy_config(Strategy::kPnn, 2));
  Config echo;
  echo.set("seed", "17");
  const auto j = ledger_json(r.ledger, echo);
  EXPECT_EQ(j["strategy"], "pnn");
  EXPECT_EQ(j["stages"].size(), 2u);
  const auto csv = curves_csv(r.ledger);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "stage,epoch,train_loss,val_loss,lr");
  const auto finals = final_evals(j);
  ASSERT_EQ(finals.size(), 2u);
  const auto row = table_row(j);
  EXPECT_EQ(row.substr(0, 4), "pnn,");
}
