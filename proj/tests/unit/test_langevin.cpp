#include <gtest/gtest.h>

#include <cmath>

#include "../support/policies.hpp"
#include "dmsb/langevin.hpp"

using namespace dmsb;
using dmsb::testing::constant_policy;
using dmsb::testing::velocity_feedback;

namespace {

RowMatrix<double> normals(Eigen::Index n, int d, Rng rng) {
  RowMatrix<double> m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST(VelocityLangevin, ZeroStepsIsNoOp) {
  const auto x = normals(5, 2, Rng(1)), v = normals(5, 2, Rng(2));
  LangevinConfig cfg;
  cfg.n_steps = 0;
  const auto pol = constant_policy<double>(2, 3.0);
  EXPECT_EQ(velocity_langevin<double>(x, v, pol, pol, 0.0, 0.2, cfg, Rng(3)), v);
}

TEST(VelocityLangevin, GaussianScoreKeepsStandardNormalInvariant) {
  // z + zhat = -g v gives the exact N(0, I) score in v.
  const double g = 0.2;
  const Eigen::Index n = 4000;
  const auto x = normals(n, 2, Rng(4));
  const auto v0 = normals(n, 2, Rng(5));
  const auto half = velocity_feedback<double>(2, -g / 2);
  LangevinConfig cfg;
  cfg.n_steps = 50;
  const auto v = velocity_langevin<double>(x, v0, half, half, 0.0, g, cfg, Rng(6));
  for (int j = 0; j < 2; ++j) {
    const double mean = v.col(j).mean();
    const double var = (v.col(j).array() - mean).square().sum() / (n - 1);
    EXPECT_LT(std::abs(mean), 0.08);
    EXPECT_GT(var, 0.88);
    EXPECT_LT(var, 1.12);
  }
}

TEST(VelocityLangevin, DegenerateScoreUsesFloorAndStaysFinite) {
  const auto x = normals(100, 1, Rng(7)), v0 = normals(100, 1, Rng(8));
  const auto zero = constant_policy<double>(1, 0.0);
  LangevinConfig cfg;
  cfg.n_steps = 10;
  LangevinTrace trace;
  const auto v = velocity_langevin<double>(x, v0, zero, zero, 0.0, 0.2, cfg, Rng(9), false, &trace);
  EXPECT_EQ(trace.floored_steps, 10);
  ASSERT_EQ(trace.sigma.size(), 10u);
  // The floor alone would give an enormous step; the cap bounds it.
  for (double s : trace.sigma) EXPECT_DOUBLE_EQ(s, 2.0 * cfg.snr * cfg.snr * cfg.max_step_ratio);
  EXPECT_TRUE(v.allFinite());
  EXPECT_LT((v - v0).cwiseAbs().maxCoeff(), 10.0);
}

TEST(VelocityLangevin, StepSizeFollowsSignalToNoiseRule) {
  // One step with a constant drift c: sigma = 2 r^2 g^2 mean|eps|^2 / |c|^2.
  const Eigen::Index n = 64;
  const RowMatrix<double> x = normals(n, 1, Rng(10)), v0 = RowMatrix<double>::Zero(n, 1);
  const double g = 0.5, c = 40.0;
  const auto pol = constant_policy<double>(1, c / 2);
  LangevinConfig cfg;
  LangevinTrace trace;
  const auto v = velocity_langevin<double>(x, v0, pol, pol, 0.0, g, cfg, Rng(11), false, &trace);
  ASSERT_EQ(trace.sigma.size(), 1u);
  const double sigma = trace.sigma[0];
  // Reconstruct eps from the update and check the step-size formula against it.
  const RowMatrix<double> eps = ((v.array() - sigma / g * c) / std::sqrt(2 * sigma)).matrix();
  const double mean_abs = eps.cwiseAbs().mean();
  EXPECT_NEAR(sigma, 2 * cfg.snr * cfg.snr * g * g * mean_abs * mean_abs / (c * c), 1e-12);
}

TEST(VelocityLangevin, RejectsMismatchedShapes) {
  const auto pol = constant_policy<double>(1, 0.0);
  EXPECT_THROW(velocity_langevin<double>(RowMatrix<double>::Zero(3, 1), RowMatrix<double>::Zero(2, 1), pol, pol, 0.0,
                                         0.2, LangevinConfig{}, Rng(0)),
               DimensionError);
  LangevinConfig bad;
  bad.snr = 0.0;
  EXPECT_THROW(velocity_langevin<double>(RowMatrix<double>::Zero(2, 1), RowMatrix<double>::Zero(2, 1), pol, pol, 0.0,
                                         0.2, bad, Rng(0)),
               ConfigError);
}
