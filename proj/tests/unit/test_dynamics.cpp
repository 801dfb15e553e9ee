#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "../support/policies.hpp"
#include "dmsb/dynamics.hpp"

using namespace dmsb;
using dmsb::testing::constant_policy;
using dmsb::testing::FnPolicy;

namespace {

PhaseBatch<double> scalar_state(double x, double v) {
  PhaseBatch<double> m(1, 1);
  m.m << x, v;
  return m;
}

RowMatrix<double> scalar(double a) { return RowMatrix<double>::Constant(1, 1, a); }

double variance(const std::vector<double>& a) {
  double mean = 0.0, sq = 0.0;
  for (double x : a) mean += x;
  mean /= a.size();
  for (double x : a) sq += (x - mean) * (x - mean);
  return sq / (a.size() - 1);
}

}  // namespace

TEST(EmForwardStep, ZeroStepIsIdentity) {
  const auto m = scalar_state(0.3, -1.7);
  const auto out = em_forward_step(m, 0.0, scalar(5.0), 0.2, scalar(3.0));
  EXPECT_EQ(out.m, m.m);
}

TEST(EmForwardStep, BallisticArithmetic) {
  const auto out = em_forward_step(scalar_state(1.0, 2.0), 0.1, scalar(0.0), 0.2, scalar(0.0));
  EXPECT_NEAR(out.x()(0, 0), 1.2, 1e-15);
  EXPECT_EQ(out.v()(0, 0), 2.0);
}

TEST(EmForwardStep, ControlAndNoiseReachVelocityOnly) {
  const auto out = em_forward_step(scalar_state(0.7, 0.0), 0.01, scalar(1.0), 0.2, scalar(0.5));
  EXPECT_EQ(out.x()(0, 0), 0.7);
  EXPECT_NEAR(out.v()(0, 0), 0.002 + 0.1 * 0.2 * 0.5, 1e-15);
}

TEST(EmForwardStep, RejectsBadShapesAndNegativeStep) {
  const auto m = scalar_state(0.0, 0.0);
  EXPECT_THROW(em_forward_step(m, 0.1, RowMatrix<double>::Zero(2, 1), 0.2, scalar(0.0)), DimensionError);
  EXPECT_THROW(em_forward_step(m, 0.1, scalar(0.0), 0.2, RowMatrix<double>::Zero(1, 2)), DimensionError);
  EXPECT_THROW(em_forward_step(m, -0.1, scalar(0.0), 0.2, scalar(0.0)), ConfigError);
}

TEST(EmBackwardStep, ZeroStepIsIdentity) {
  const auto m = scalar_state(-4.0, 0.25);
  EXPECT_EQ(em_backward_step(m, 0.0, scalar(2.0), 0.2, scalar(1.0)).m, m.m);
}

TEST(EmBackwardStep, InvertsBallisticForwardStep) {
  const auto prev = em_backward_step(scalar_state(1.2, 2.0), 0.1, scalar(0.0), 0.2, scalar(0.0));
  EXPECT_NEAR(prev.x()(0, 0), 1.0, 1e-15);
  EXPECT_EQ(prev.v()(0, 0), 2.0);
}

TEST(EmBackwardStep, ControlArithmetic) {
  const auto prev = em_backward_step(scalar_state(0.0, 0.0), 0.01, scalar(1.0), 0.2, scalar(0.0));
  EXPECT_NEAR(prev.v()(0, 0), 0.002, 1e-15);
}

TEST(EmBackwardStep, SharesPositionKinematicsWithForwardChain) {
  // x_next - x = dt * v (velocity at the earlier time) in both directions.
  const auto hi = scalar_state(0.4, 1.5);
  const auto lo = em_backward_step(hi, 0.05, scalar(0.8), 0.5, scalar(-1.1));
  EXPECT_NEAR(hi.x()(0, 0) - lo.x()(0, 0), 0.05 * lo.v()(0, 0), 1e-15);
}

TEST(TimeGrid, StepTimesAndSegments) {
  TimeGrid grid{{0.0, 1.0, 3.0}, 4, 0.2};
  grid.validate();
  EXPECT_EQ(grid.total_steps(), 8);
  EXPECT_DOUBLE_EQ(grid.dt(0), 0.25);
  EXPECT_DOUBLE_EQ(grid.dt(1), 0.5);
  EXPECT_DOUBLE_EQ(grid.time_at(4), 1.0);
  EXPECT_DOUBLE_EQ(grid.time_at(6), 2.0);
  EXPECT_DOUBLE_EQ(grid.time_at(8), 3.0);
  EXPECT_EQ(grid.segment_of(7), 1);
  EXPECT_THROW((TimeGrid{{0.0, 0.0}, 4, 0.2}.validate()), ConfigError);
  EXPECT_THROW((TimeGrid{{0.0}, 4, 0.2}.validate()), ConfigError);
  EXPECT_THROW((TimeGrid{{0.0, 1.0}, 4, 0.0}.validate()), ConfigError);
}

TEST(Simulate, CacheShapeAndTimes) {
  TimeGrid grid{{0.0, 1.0, 2.0}, 5, 0.2};
  PhaseBatch<double> start(3, 2);
  const auto cache = simulate<double>(constant_policy<double>(2, 0.0), start, 0, 2, Direction::forward, grid, Rng(1));
  EXPECT_EQ(cache.batch, 3);
  EXPECT_EQ(cache.steps(), 10);
  EXPECT_EQ(cache.states.size(), 3u * 11u * 4u);
  EXPECT_DOUBLE_EQ(cache.times.front(), 0.0);
  EXPECT_DOUBLE_EQ(cache.times.back(), 2.0);
  EXPECT_EQ(cache.marginal_index(1), 5);
  EXPECT_THROW(cache.marginal_index(3), DimensionError);
}

TEST(Simulate, ForwardStartsAtFirstBackwardAtLast) {
  TimeGrid grid{{0.0, 1.0}, 10, 0.3};
  PhaseBatch<double> start(2, 1);
  start.m << 1.0, 2.0, -1.0, 0.5;
  const auto zero = constant_policy<double>(1, 0.0);
  const auto f = simulate<double>(zero, start, 0, 1, Direction::forward, grid, Rng(2));
  const auto b = simulate<double>(zero, start, 0, 1, Direction::backward, grid, Rng(2));
  EXPECT_EQ(f.slice(0).m, start.m);
  EXPECT_EQ(b.slice(b.steps()).m, start.m);
}

TEST(Simulate, BallisticMotionIsExactWithoutNoise) {
  // With no noise and no control v is constant, so x(T) = x0 + v0 T up to float rounding
  // of the repeated additions.
  const int steps = 50;
  auto m = scalar_state(0.5, -1.25);
  for (int k = 0; k < steps; ++k) m = em_forward_step(m, 0.02, scalar(0.0), 0.0, scalar(1.0));
  EXPECT_EQ(m.v()(0, 0), -1.25);
  EXPECT_NEAR(m.x()(0, 0), 0.5 - 1.25, 1e-13);
}

TEST(Simulate, ItoMomentsOfIntegratedBrownianMotion) {
  const double g = 0.2, T = 1.0;
  TimeGrid grid{{0.0, T}, 100, g};
  const Eigen::Index n = 20000;
  PhaseBatch<double> start(n, 1);
  start.x().setConstant(0.3);
  start.v().setConstant(-0.4);
  const auto cache = simulate<double>(constant_policy<double>(1, 0.0), start, 0, 1, Direction::forward, grid, Rng(3));
  const auto end = cache.slice(cache.steps());
  std::vector<double> x(n), v(n);
  for (Eigen::Index b = 0; b < n; ++b) x[b] = end.x()(b, 0), v[b] = end.v()(b, 0);
  EXPECT_NEAR(variance(v) / (g * g * T), 1.0, 0.05);
  // Euler position variance is g^2 dt^3 sum k^2 over k < S, i.e. g^2 T^3 (1 - 1/S)(1 - 1/(2S)) / 3.
  EXPECT_NEAR(variance(x) / (g * g * T * T * T / 3.0), 1.0, 0.05);
  double mean_x = 0.0;
  for (double a : x) mean_x += a / n;
  EXPECT_NEAR(mean_x, 0.3 - 0.4 * T, 4.0 * std::sqrt(g * g / 3.0 / n));
}

TEST(Simulate, DeterministicPerRngAndPerSampleStreams) {
  TimeGrid grid{{0.0, 1.0}, 20, 0.5};
  PhaseBatch<double> start(4, 2);
  const auto pol = constant_policy<double>(2, 0.1);
  const auto a = simulate<double>(pol, start, 0, 1, Direction::forward, grid, Rng(4));
  const auto b = simulate<double>(pol, start, 0, 1, Direction::forward, grid, Rng(4));
  const auto c = simulate<double>(pol, start, 0, 1, Direction::forward, grid, Rng(5));
  EXPECT_EQ(a.states, b.states);
  EXPECT_NE(a.states, c.states);
  // Sample b's noise does not depend on the batch size.
  PhaseBatch<double> bigger(6, 2);
  const auto d = simulate<double>(pol, bigger, 0, 1, Direction::forward, grid, Rng(4));
  for (int k = 0; k <= a.steps(); ++k)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(a.state(3, k)[j], d.state(3, k)[j]);
}

TEST(Simulate, NonFiniteStateReportsStep) {
  TimeGrid grid{{0.0, 1.0}, 10, 0.2};
  FnPolicy<double> blowup{1, [](double t, const auto&, auto out) {
                            out.setConstant(t > 0.45 ? std::numeric_limits<double>::infinity() : 0.0);
                          }};
  PhaseBatch<double> start(2, 1);
  try {
    simulate<double>(blowup, start, 0, 1, Direction::forward, grid, Rng(6));
    FAIL() << "expected divergence";
  } catch (const SimulationDiverged& e) {
    EXPECT_EQ(e.step(), 6u);
  }
}

TEST(Simulate, RejectsBadSpan) {
  TimeGrid grid{{0.0, 1.0, 2.0}, 4, 0.2};
  PhaseBatch<double> start(1, 1);
  const auto pol = constant_policy<double>(1, 0.0);
  EXPECT_THROW(simulate<double>(pol, start, 1, 1, Direction::forward, grid, Rng(0)), ConfigError);
  EXPECT_THROW(simulate<double>(pol, start, 0, 3, Direction::forward, grid, Rng(0)), ConfigError);
}
