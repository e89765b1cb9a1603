// Copyright 2026 The sparse-scaling Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <sparse_scaling/analysis.hpp>
#include <sparse_scaling/fitting.hpp>
#include <sparse_scaling/rng.hpp>

namespace ss = sparse_scaling;
using ss::Index;

namespace {

ss::Series power_law(double prefactor, double exponent, std::vector<double> scales) {
  ss::Series s;
  for (double x : scales) s.push_back({x, prefactor * std::pow(x, -exponent)});
  return s;
}

const std::vector<double> kScales{10, 14, 20, 28, 40, 56, 80, 112, 160};

TEST(Fit, ExactPowerLaw) {
  const auto f = ss::loglog_fit(power_law(7.0, 2.3, kScales), 6);
  EXPECT_NEAR(f.exponent, 2.3, 1e-12);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
  ASSERT_EQ(f.intercepts.size(), 1u);
  EXPECT_NEAR(f.intercepts[0], std::log10(7.0), 1e-12);
  EXPECT_EQ(f.tail_count, 6);
}

TEST(Fit, ConstantLossHasZeroExponent) {
  EXPECT_NEAR(ss::loglog_fit(power_law(0.3, 0.0, kScales), 6).exponent, 0.0, 1e-14);
}

TEST(Fit, NoisyPowerLawOverADecade) {
  ss::Philox4x32 g(2024, 0);
  std::normal_distribution<double> noise(0.0, 0.1);
  ss::Series s;
  for (double x = 10.0; x <= 100.0 + 1e-9; x *= std::pow(10.0, 0.1)) s.push_back({x, std::pow(x, -2.3) * (1.0 + noise(g))});
  EXPECT_NEAR(ss::loglog_fit(s, static_cast<int>(s.size())).exponent, 2.3, 0.2);
}

TEST(Fit, UsesOnlyTheTail) {
  auto s = power_law(1.0, 2.0, kScales);
  s[0].loss *= 100.0;
  s[1].loss *= 0.01;
  EXPECT_NEAR(ss::loglog_fit(s, 6).exponent, 2.0, 1e-12);
}

TEST(Fit, StandardErrorUndefinedWithoutSpareDegreesOfFreedom) {
  const auto f = ss::loglog_fit(power_law(1.0, 1.0, {1.0, 2.0}), 2);
  EXPECT_NEAR(f.exponent, 1.0, 1e-14);
  EXPECT_TRUE(std::isnan(f.stderr_exponent));
}

TEST(Fit, RejectsBadInput) {
  EXPECT_THROW(ss::loglog_fit(power_law(1.0, 1.0, {1.0, 2.0}), 3), std::invalid_argument);
  EXPECT_THROW(ss::loglog_fit(power_law(1.0, 1.0, {2.0, 1.0, 3.0}), 3), std::invalid_argument);
  auto s = power_law(1.0, 1.0, {1.0, 2.0, 3.0});
  s[1].loss = 0.0;
  EXPECT_THROW(ss::loglog_fit(s, 3), std::domain_error);
  EXPECT_THROW(ss::loglog_fit(s, 1), std::invalid_argument);
}

TEST(Fit, InvalidPointsAreDroppedAndCounted) {
  auto s = power_law(1.0, 1.5, kScales);
  s[8].diverged = true;
  s[7].loss = std::nan("");
  const auto f = ss::loglog_fit_valid(s, 4);
  EXPECT_EQ(f.excluded, 2);
  EXPECT_NEAR(f.exponent, 1.5, 1e-12);
}

TEST(JointFit, SharedExponentDistinctIntercepts) {
  const auto f = ss::joint_fit({power_law(2.0, 1.7, kScales), power_law(50.0, 1.7, kScales)}, 5);
  EXPECT_NEAR(f.exponent, 1.7, 1e-12);
  ASSERT_EQ(f.intercepts.size(), 2u);
  EXPECT_NEAR(f.intercepts[0], std::log10(2.0), 1e-12);
  EXPECT_NEAR(f.intercepts[1], std::log10(50.0), 1e-12);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
}

TEST(JointFit, SingleSeriesMatchesOrdinaryFit) {
  ss::Philox4x32 g(5, 0);
  ss::Series s;
  for (double x : kScales) s.push_back({x, std::pow(x, -1.2) * std::exp(0.2 * (g.uniform() - 0.5))});
  const auto a = ss::joint_fit({s}, 7), b = ss::loglog_fit(s, 7);
  EXPECT_EQ(a.exponent, b.exponent);
  EXPECT_EQ(a.intercepts, b.intercepts);
  EXPECT_EQ(a.residual_rms, b.residual_rms);
}

// Randomized instances for the equivariance properties.
std::vector<ss::Series> random_series(ss::Philox4x32& g, int count) {
  std::vector<ss::Series> out;
  for (int k = 0; k < count; ++k) {
    ss::Series s;
    double x = 1.0 + 10.0 * g.uniform();
    const double a = 0.5 + 2.5 * g.uniform();
    const double c = std::exp(4.0 * (g.uniform() - 0.5));
    for (int i = 0; i < 8; ++i) {
      s.push_back({x, c * std::pow(x, -a) * std::exp(0.3 * (g.uniform() - 0.5))});
      x *= 1.2 + g.uniform();
    }
    out.push_back(s);
  }
  return out;
}

TEST(FitProperties, ScaleEquivariance) {
  ss::Philox4x32 g(11, 0);
  for (int trial = 0; trial < 50; ++trial) {
    auto series = random_series(g, 1 + trial % 3);
    const double c = std::exp(6.0 * (g.uniform() - 0.5));
    const auto base = ss::joint_fit(series, 6);
    for (auto& s : series)
      for (auto& p : s) p.loss *= c;
    const auto scaled = ss::joint_fit(series, 6);
    EXPECT_NEAR(scaled.exponent, base.exponent, 1e-10);
    for (std::size_t k = 0; k < base.intercepts.size(); ++k)
      EXPECT_NEAR(scaled.intercepts[k], base.intercepts[k] + std::log10(c), 1e-10);
  }
}

TEST(FitProperties, Reparameterization) {
  ss::Philox4x32 g(12, 0);
  for (int trial = 0; trial < 50; ++trial) {
    auto series = random_series(g, 1 + trial % 3);
    const double p = 0.3 + 3.0 * g.uniform();
    const auto base = ss::joint_fit(series, 6);
    for (auto& s : series)
      for (auto& pt : s) pt.scale = std::pow(pt.scale, p);
    EXPECT_NEAR(ss::joint_fit(series, 6).exponent, base.exponent / p, 1e-10 * std::abs(base.exponent / p) + 1e-12);
  }
}

TEST(FitProperties, JointResidualNotBelowBestSingleSeries) {
  ss::Philox4x32 g(13, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto series = random_series(g, 2 + trial % 3);
    const double joint = ss::joint_fit(series, 6).residual_rms;
    double best = 1e300;
    for (const auto& s : series) best = std::min(best, ss::loglog_fit(s, 6).residual_rms);
    EXPECT_GE(joint, best - 1e-12);
  }
}

// ---------------------------------------------------------------------------
// collapse and frontier

ss::SweepRecord record(Index n, Index d, double loss, std::uint64_t seed = 0) {
  const ss::SparsityParams p{1.0, 0.3, 10000};
  ss::SweepRecord r;
  r.alpha1 = p.alpha1;
  r.alpha2 = p.alpha2;
  r.n = n;
  r.d = d;
  r.seed = seed;
  r.loss = loss;
  r.compute = ss::compute_proxy(static_cast<double>(n), static_cast<double>(d));
  r.xi = ss::collapse_variable(p, static_cast<double>(n), static_cast<double>(d));
  return r;
}

TEST(Collapse, PureParameterLimitedLossRescalesToOne) {
  const ss::SparsityParams p{1.0, 0.3, 10000};
  std::vector<ss::SweepRecord> recs;
  for (Index n : {16, 32, 64})
    for (Index d : {100, 1000, 10000}) recs.push_back(record(n, d, std::pow(static_cast<double>(n), -2.3)));
  for (const auto& c : ss::collapse_transform(recs, p)) EXPECT_NEAR(c.rescaled_loss, 1.0, 1e-12);
}

TEST(Collapse, PureDataLimitedLossRescalesToPowerOfXi) {
  const ss::SparsityParams p{1.0, 0.3, 10000};
  std::vector<ss::SweepRecord> recs;
  for (Index n : {16, 32, 64})
    for (Index d : {100, 1000, 10000}) recs.push_back(record(n, d, std::pow(static_cast<double>(d), -1.15)));
  for (const auto& c : ss::collapse_transform(recs, p))
    EXPECT_NEAR(c.rescaled_loss, std::pow(c.xi, -2.3), 1e-10 * std::pow(c.xi, -2.3));
}

TEST(Collapse, SeedAveragingAndOverlay) {
  const ss::SparsityParams p{1.0, 0.3, 10000};
  std::vector<ss::SweepRecord> recs;
  for (Index n : {10, 20})
    for (double xi : {0.5, 1.0, 2.0}) {
      const Index d = static_cast<Index>(std::llround(std::pow(xi * static_cast<double>(n), 2.0)));
      for (std::uint64_t s = 0; s < 3; ++s)
        recs.push_back(record(n, d, std::pow(static_cast<double>(n), -2.3) * (1.0 + 0.1 * static_cast<double>(s)), s));
    }
  recs.back().diverged = true;
  const auto means = ss::seed_average(recs);
  ASSERT_EQ(means.size(), 6u);
  EXPECT_EQ(means.back().seeds, 2);
  EXPECT_EQ(means.back().excluded, 1);
  const auto curves = ss::collapse_curves(recs, p);
  ASSERT_EQ(curves.size(), 2u);
  const auto overlay = ss::collapse_overlay(curves, {0.5, 0.7, 1.0});
  for (const auto& o : overlay) {
    EXPECT_EQ(o.families, 2);
    EXPECT_NEAR(o.mean, 1.1, 0.06);
  }
}

TEST(Collapse, LocalMaxima) {
  EXPECT_EQ(ss::local_maxima({1, 3, 2, 2, 5, 1}), (std::vector<std::size_t>{1, 4}));
  EXPECT_TRUE(ss::local_maxima({1, 2, 3}).empty());
}

TEST(Frontier, SingleRecordIsTheEnvelope) {
  const auto env = ss::compute_frontier({record(10, 100, 0.5)});
  ASSERT_EQ(env.size(), 1u);
  EXPECT_EQ(env[0].min_loss, 0.5);
  EXPECT_EQ(env[0].compute, 1e4);
}

TEST(Frontier, EnvelopeIsNonIncreasing) {
  ss::Philox4x32 g(3, 0);
  std::vector<ss::SweepRecord> recs;
  for (Index n : {8, 16, 32})
    for (Index d = 8; d < 5000; d = d * 3 / 2) recs.push_back(record(n, d, g.uniform()));
  const auto env = ss::compute_frontier(recs);
  for (std::size_t i = 1; i < env.size(); ++i) {
    EXPECT_LE(env[i].min_loss, env[i - 1].min_loss);
    EXPECT_GT(env[i].compute, env[i - 1].compute);
  }
}

TEST(Frontier, SlopeOfTheTwoTermLaw) {
  // loss = N^-2.3 + D^-1.15 over the acceptance family layout; the envelope must
  // decay as C^-0.575.
  std::vector<ss::SweepRecord> recs;
  for (Index n : {16, 23, 32, 45, 64, 90, 128}) {
    const double top = 4.0 * static_cast<double>(n) * static_cast<double>(n);
    for (int k = 0; k < 16; ++k) {
      const Index d = static_cast<Index>(std::llround(16.0 * std::pow(top / 16.0, k / 15.0)));
      recs.push_back(record(n, d, std::pow(static_cast<double>(n), -2.3) + std::pow(static_cast<double>(d), -1.15)));
    }
  }
  const auto s = ss::frontier_slope(recs);
  EXPECT_NEAR(-s.fit.exponent, -0.575, 0.08);
  EXPECT_NEAR(s.c_high / s.c_low, 10.0, 1e-9);
}

TEST(Interpolation, EndsSnapWithinSlack) {
  ss::CollapseCurve c;
  c.n = 10;
  c.xi = {1.0, 2.0};
  c.rescaled = {4.0, 1.0};
  EXPECT_NEAR(ss::interpolate_curve(c, std::sqrt(2.0)), 2.0, 1e-12);
  EXPECT_EQ(ss::interpolate_curve(c, 0.99), 4.0);
  EXPECT_TRUE(std::isnan(ss::interpolate_curve(c, 0.9)));
  EXPECT_TRUE(std::isnan(ss::interpolate_curve(c, 2.2)));
}

}  // namespace
