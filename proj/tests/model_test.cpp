// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace doapnn;

namespace {

// Layer-by-layer tally written out longhand.
std::size_t tally(const SsnetConfig& c, const std::vector<int>& column_blocks) {
  auto conv = [](std::size_t i, std::size_t o, std::size_t k) { return o * i * k * k + o; };
  const std::size_t k = c.kernel, w = c.width;
  std::size_t n = w * kNumAzimuths + kNumAzimuths;  // shared head
  for (std::size_t t = 1; t <= column_blocks.size(); ++t) {
    n += conv(c.in_channels, c.conv1, k);
    n += conv(c.conv1, c.conv2, k);
    for (int b = 0; b < column_blocks[t - 1]; ++b)
      n += conv(w, w, k) + w + w + conv(w, w, k) + w + w;
    n += conv(t * w, w, 1);  // adapter over t concatenated maps
  }
  return n;
}

NdArray<float> probe(std::size_t f = 20, std::size_t t = 6, std::uint64_t seed = 1) {
  Rng rng(seed);
  NdArray<float> x({4, f, t});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return x;
}

}  // namespace

TEST(ScaleBlocks, ToleranceToDepth) {
  EXPECT_EQ(scale_blocks(1), 5);
  EXPECT_EQ(scale_blocks(2), 3);
  EXPECT_EQ(scale_blocks(3), 2);
  EXPECT_EQ(scale_blocks(4), 2);
  EXPECT_EQ(scale_blocks(5), 1);
  EXPECT_EQ(scale_blocks(15), 1);
  EXPECT_THROW(scale_blocks(0.5), InputError);
}

TEST(ParamCount, FullSsnet) {
  const SsnetConfig c;
  const auto m = build_ssnet<float>(c, 1);
  EXPECT_EQ(m.params().scalar_count(), 406165u);
  EXPECT_EQ(ssnet_param_count(c), 406165u);
  EXPECT_EQ(m.param_count().total, tally(c, {5}));
}

TEST(ParamCount, ProgressiveMatchesTally) {
  for (double tol : {1.0, 2.0, 5.0}) {
    auto m = build_progressive<float>(oracle::tiny_net(), tol, HeadPolicy::kFrozenAfterFirst, 3);
    std::vector<int> blocks;
    for (int t = 1; t <= 5; ++t) {
      m.add_column(t, column_seed(3, t));
      blocks.push_back(t == 1 ? 5 : scale_blocks(tol));
      EXPECT_EQ(m.params().scalar_count(), tally(oracle::tiny_net(), blocks));
      EXPECT_EQ(m.param_count().total, m.params().scalar_count());
    }
  }
}

TEST(ParamCount, FivePnnColumnsUndercutFiveModels) {
  const SsnetConfig c;
  auto pnn = build_progressive<float>(c, 5, HeadPolicy::kFrozenAfterFirst, 1);
  for (int t = 1; t <= 5; ++t) pnn.add_column(t, column_seed(1, t));
  EXPECT_LT(pnn.params().scalar_count(), 5 * ssnet_param_count(c));
}

TEST(Model, ConfigValidation) {
  SsnetConfig c;
  c.conv2 = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SsnetConfig{};
  c.blocks = 6;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, ForwardShapeAndRange) {
  const auto m = build_ssnet<float>(oracle::tiny_net(), 4);
  const auto s = m.predict(1, probe(253, 97));
  for (float v : s) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Model, RoutingErrors) {
  auto m = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 2);
  EXPECT_THROW(m.predict(1, probe()), RoutingError);
  m.add_column(1, 1);
  EXPECT_THROW(m.predict(2, probe()), RoutingError);
  EXPECT_THROW(m.add_column(3, 1), StateError);
}

TEST(Model, AddColumnFreezesPredecessorsAndHead) {
  auto m = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 2);
  m.add_column(1, 10);
  EXPECT_FALSE(m.head_frozen());
  EXPECT_FALSE(m.column(0).frozen());
  m.add_column(2, 11);
  EXPECT_TRUE(m.column(0).frozen());
  EXPECT_FALSE(m.column(1).frozen());
  EXPECT_TRUE(m.head_frozen());
  EXPECT_EQ(m.column(1).blocks, 1);

  auto t = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kTrainable, 2);
  t.add_column(1, 10);
  t.add_column(2, 11);
  EXPECT_FALSE(t.head_frozen());
}

TEST(Model, SsnetIsFirstColumnOfPnn) {
  const auto s = build_ssnet<float>(oracle::tiny_net(), 9);
  auto p = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 9);
  p.add_column(1, column_seed(9, 1));
  ASSERT_EQ(s.params().size(), p.params().size());
  for (std::size_t i = 0; i < s.params().size(); ++i) {
    EXPECT_EQ(s.params()[i].name, p.params()[i].name);
    EXPECT_EQ(s.params()[i].value, p.params()[i].value);
  }
}

TEST(Model, ColumnTwoSeesColumnOne) {
  auto m = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 5);
  m.add_column(1, 1);
  m.add_column(2, 2);
  const auto x = probe();
  const auto before = m.predict(2, x);
  // Perturbing column 1 changes task 2's output through the lateral path.
  for (auto& v : m.params().get("col1.conv1.weight").value.values()) v *= 1.5f;
  EXPECT_NE(before, m.predict(2, x));
}

TEST(Model, CastRoundTrip) {
  auto m = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 5);
  m.add_column(1, 1);
  m.add_column(2, 2);
  const auto d = m.cast<double>();
  const auto back = d.cast<float>();
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(m.params()[i].value, back.params()[i].value);
    EXPECT_EQ(m.params()[i].frozen, back.params()[i].frozen);
  }
  const auto x = probe();
  const auto sf = m.predict(2, x);
  const auto sd = d.predict(2, x.cast<double>());
  for (std::size_t i = 0; i < kNumAzimuths; ++i) EXPECT_NEAR(sf[i], sd[i], 1e-5);
}

TEST(Model, TwoColumnGradientCheck) {
  auto mf = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 21);
  mf.add_column(1, column_seed(21, 1));
  mf.add_column(2, column_seed(21, 2));
  auto m = mf.cast<double>();
  for (std::size_t i = 0; i < m.params().size(); ++i) m.params()[i].frozen = false;
  const auto x = probe(12, 4, 3).cast<double>();
  const auto tgt = gaussian_spectrum<double>(40, 8);
  NdArray<double> target({kNumAzimuths}, std::vector<double>(tgt.begin(), tgt.end()));
  auto loss = [&] {
    Tape<double> t(false);
    return t.value(t.mse(m.forward(t, 2, t.input(x)), t.input(target)))[0];
  };
  m.params().zero_grad();
  {
    Tape<double> t;
    t.backward(t.mse(m.forward(t, 2, t.input(x)), t.input(target)));
  }
  double worst = 0;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    auto& p = m.params()[i];
    // Column 1's adapter only feeds task 1's output.
    if (p.name.rfind("col1.adapter", 0) == 0) {
      EXPECT_FALSE(p.has_grad) << p.name;
      continue;
    }
    ASSERT_TRUE(p.has_grad) << p.name;
    // Step 1e-5 sits between roundoff on tiny gradients and ReLU kinks.
    worst = std::max(worst, oracle::max_rel_error(p.value.values(), p.grad.values(), loss,
                                                  1e-5, 1e-6));
  }
  EXPECT_LT(worst, 1e-4);
}
