// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace doapnn;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST(GccPhat, IntegerShift) {
  const auto base = noise(4003, 1);
  std::vector<double> x1(base.begin() + 3, base.end()), x2(base.begin(), base.end() - 3);
  // x2[n] = x1[n - 3]: channel 2 lags by 3 samples. The edges are not
  // circular, so the peak has a small skew that interpolation picks up.
  const auto est = gcc_phat_tdoa<double>(x1, x2, 8);
  EXPECT_NEAR(est.delay_samples, 3.0, 1e-2);
  EXPECT_DOUBLE_EQ(est.delay_seconds, est.delay_samples / 16000);
}

TEST(GccPhat, FractionalShiftAndAntisymmetry) {
  const auto x1 = noise(1024, 2);
  const auto x2 = oracle::fractional_delay(x1, 1.866);
  const auto fwd = gcc_phat_tdoa<double>(x1, x2, 6);
  const auto rev = gcc_phat_tdoa<double>(x2, x1, 6);
  EXPECT_NEAR(fwd.delay_samples, 1.866, 0.25);
  EXPECT_NEAR(fwd.delay_samples, -rev.delay_samples, 1e-3);
}

TEST(GccPhat, ScaleInvariance) {
  const auto base = noise(2050, 3);
  std::vector<double> x1(base.begin(), base.end() - 2), x2(base.begin() + 2, base.end());
  std::vector<double> a = x1, b = x2;
  for (auto& v : a) v *= 7.5;
  for (auto& v : b) v *= 0.01;
  const auto e1 = gcc_phat_tdoa<double>(x1, x2, 6);
  const auto e2 = gcc_phat_tdoa<double>(a, b, 6);
  EXPECT_NEAR(e1.delay_samples, e2.delay_samples, 1e-9);
}

TEST(GccPhat, Preconditions) {
  std::vector<double> a(600, 1.0), b(600, 0.0), c(400, 1.0);
  EXPECT_THROW(gcc_phat_tdoa<double>(a, b, 4), DegenerateSignalError);
  EXPECT_THROW(gcc_phat_tdoa<double>(c, c, 4), InputError);
  EXPECT_THROW(gcc_phat_tdoa<double>(a, std::vector<double>(601, 1.0), 4), InputError);
}

TEST(GccPhat, AnechoicBroadsideAndEndfire) {
  const auto bs = oracle::anechoic_pair(0.09, 90, 4);
  const auto e90 = gcc_phat_tdoa<float>(bs[0], bs[1], max_lag_for(0.09));
  EXPECT_NEAR(e90.delay_samples, 0.0, 0.5);
  const auto ef = oracle::anechoic_pair(0.09, 0, 5);
  const auto e0 = gcc_phat_tdoa<float>(ef[0], ef[1], max_lag_for(0.09));
  EXPECT_NEAR(e0.delay_samples, 0.09 / 343 * 16000, 0.5);  // 4.20 samples
  EXPECT_LE(std::abs(e0.delay_samples), 0.09 / 343 * 16000 + 1);
}

TEST(SrpPhat, SyntheticDelayAt60Degrees) {
  const double tau = 0.08 * std::cos(60 * std::numbers::pi / 180) / 343 * 16000;
  const auto x1 = noise(2048, 6);
  const auto x2 = oracle::fractional_delay(x1, tau);
  const int az = srp_phat_doa<double>(x1, x2, 0.08);
  EXPECT_NEAR(az, 60, 3);
  // GCC inversion agrees within one grid step of the SRP answer.
  const auto est = gcc_phat_tdoa<double>(x1, x2, max_lag_for(0.08));
  EXPECT_NEAR(tdoa_to_azimuth(est.delay_seconds, 0.08), az, 5);
}

TEST(SrpPhat, Broadside) {
  const auto x = noise(1024, 7);
  EXPECT_EQ(srp_phat_doa<double>(x, x, 0.05), 90);
}

TEST(SrpPhat, SweepIsMonotone) {
  // Endfire directions map to the extremes of the grid.
  const auto a = oracle::anechoic_pair(0.09, 0, 9);
  const auto b = oracle::anechoic_pair(0.09, 180, 9);
  EXPECT_LT(srp_phat_doa<float>(a[0], a[1], 0.09), 30);
  EXPECT_GT(srp_phat_doa<float>(b[0], b[1], 0.09), 150);
}

TEST(Tdoa, AzimuthInversion) {
  for (int th : {0, 30, 90, 135, 180}) {
    const double tau = 0.07 * std::cos(th * std::numbers::pi / 180) / 343;
    EXPECT_NEAR(tdoa_to_azimuth(tau, 0.07), th, 1e-6);
  }
  EXPECT_EQ(max_lag_for(0.09), 6);  // ceil(4.198) + 1
}
