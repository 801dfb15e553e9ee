#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmsb/metrics.hpp"

using namespace dmsb;

namespace {

Points normals(Eigen::Index n, int d, Rng rng) {
  Points m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

Points column(std::initializer_list<double> v) {
  Points m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double a : v) m(i++, 0) = a;
  return m;
}

// Sorted-sample W_p between equal-size 1-D sets.
double sorted_wp(std::vector<double> a, std::vector<double> b, int p) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(s / a.size(), 1.0 / p);
}

double brute_force_w1(const Points& x, const Points& y) {
  std::vector<int> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) c += (x.row(i) - y.row(perm[i])).norm();
    best = std::min(best, c / x.rows());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Swd, IdenticalSetsGiveZero) {
  const auto x = normals(50, 3, Rng(1));
  EXPECT_EQ(swd(x, x), 0.0);
  EXPECT_EQ(max_swd(x, x), 0.0);
}

TEST(Swd, AntipodalProjectionsEqualExactOneDimensional) {
  Points dirs(2, 1);
  dirs << 1.0, -1.0;
  for (int p : {1, 2}) {
    for (int k = 0; k < 10; ++k) {
      Rng rng = Rng(2).split(static_cast<std::uint64_t>(k));
      const auto x = normals(37, 1, rng.split("x")), y = normals(37, 1, rng.split("y"));
      const std::vector<double> a(x.data(), x.data() + 37), b(y.data(), y.data() + 37);
      EXPECT_NEAR(swd_with_projections(x, y, dirs, p), sorted_wp(a, b, p), 1e-9);
    }
  }
}

TEST(Swd, UnequalSizesUseQuantileFunctions) {
  // {0} vs {0, 2}: quantile functions differ by 2 on half the levels.
  EXPECT_NEAR(wasserstein_1d({0.0}, {0.0, 2.0}, 2), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(wasserstein_1d({0.0}, {0.0, 2.0}, 1), 1.0, 1e-12);
  // Replicating every sample does not change the distance.
  EXPECT_NEAR(wasserstein_1d({1.0, 3.0}, {0.0, 5.0}, 2), wasserstein_1d({1.0, 1.0, 3.0, 3.0}, {0.0, 5.0}, 2), 1e-12);
}

TEST(Swd, DeterministicGivenSeedAndValidatesInput) {
  const auto x = normals(40, 4, Rng(3)), y = normals(30, 4, Rng(4));
  EXPECT_EQ(swd(x, y, 16, 2, 9), swd(x, y, 16, 2, 9));
  EXPECT_NE(swd(x, y, 16, 2, 9), swd(x, y, 16, 2, 10));
  EXPECT_THROW(swd(x, normals(3, 2, Rng(5))), DimensionError);
  EXPECT_THROW(swd(Points(0, 4), y), std::invalid_argument);
}

TEST(Swd, MaxDominatesMeanForPEqualOne) {
  const Points x = normals(60, 3, Rng(6)), y = normals(60, 3, Rng(7)).array() + 0.5;
  const Points dirs = random_projections(3, 32, 1);
  EXPECT_GE(max_swd_with_projections(x, y, dirs, 1), swd_with_projections(x, y, dirs, 1));
}

TEST(Mmd, SelfDistanceIsExactlyZeroAndSymmetric) {
  const auto x = normals(40, 2, Rng(8)), y = normals(30, 2, Rng(9));
  EXPECT_EQ(mmd(x, x), 0.0);
  EXPECT_NEAR(mmd(x, y), mmd(y, x), 1e-15);
}

TEST(Mmd, SingletonKernelSum) {
  EXPECT_NEAR(mmd_with_bandwidths(column({0.0}), column({1.0}), {1.0}), 2.0 - 2.0 * std::exp(-0.5), 1e-15);
}

TEST(Energy, SingletonsAndIdenticalSets) {
  EXPECT_DOUBLE_EQ(energy_distance(column({0.0}), column({1.0})), 2.0);
  const auto x = normals(20, 2, Rng(10));
  EXPECT_EQ(energy_distance(x, x), 0.0);
}

TEST(W1Small, SortedMatchingInOneDimension) {
  EXPECT_DOUBLE_EQ(w1_small(column({0.0, 1.0}), column({1.0, 2.0})), 1.0);
  const auto x = normals(8, 2, Rng(11));
  EXPECT_NEAR(w1_small(x, x), 0.0, 1e-15);
}

TEST(W1Small, MatchesPermutationBruteForce) {
  for (int k = 0; k < 100; ++k) {
    Rng rng = Rng(12).split(static_cast<std::uint64_t>(k));
    const int n = 1 + static_cast<int>(rng.below(6));
    const auto x = normals(n, 2, rng.split("x")), y = normals(n, 2, rng.split("y"));
    EXPECT_NEAR(w1_small(x, y), brute_force_w1(x, y), 1e-12) << "instance " << k;
  }
  EXPECT_THROW(w1_small(normals(3, 1, Rng(0)), normals(4, 1, Rng(0))), DimensionError);
  EXPECT_THROW(w1_small(normals(513, 1, Rng(0)), normals(513, 1, Rng(0))), DimensionError);
}

TEST(Evaluate, SelfComparisonGivesZeroRowsAndFlagsLeftOut) {
  MarginalSet ref{1, {}};
  TimeGrid grid{{0.0, 1.0, 2.0}, 4, 0.2};
  TrajectoryCache<double> traj(Direction::forward, 0, 2, grid, 16, 1);
  Rng rng(13);
  for (int i = 0; i < 3; ++i) {
    Points pos(16, 1);
    for (Eigen::Index b = 0; b < 16; ++b) {
      pos(b, 0) = rng.normal();
      traj.state(b, traj.marginal_index(i))[0] = pos(b, 0);
    }
    ref.marginals.push_back({static_cast<double>(i), pos, {}, false});
  }
  ref = leave_out(ref, 1);
  const auto rep = evaluate(traj, ref);
  ASSERT_EQ(rep.positions.size(), 3u);
  EXPECT_TRUE(rep.velocities.empty());
  for (const auto& r : rep.positions) {
    EXPECT_EQ(r.swd, 0.0);
    EXPECT_EQ(r.mmd, 0.0);
    EXPECT_EQ(r.energy, 0.0);
    EXPECT_EQ(r.mswd, 0.0);
    EXPECT_EQ(r.left_out, r.index == 1);
  }
}

TEST(Evaluate, AveragesAndVelocityRows) {
  MarginalSet ref{1, {}};
  TimeGrid grid{{0.0, 1.0}, 2, 0.2};
  TrajectoryCache<double> traj(Direction::forward, 0, 1, grid, 10, 1);
  for (int i = 0; i < 2; ++i) ref.marginals.push_back({double(i), normals(10, 1, Rng(20 + i)), normals(10, 1, Rng(30 + i)), false});
  const auto rep = evaluate(traj, ref);
  ASSERT_EQ(rep.velocities.size(), 2u);
  const auto avg = MetricReport::average(rep.positions);
  EXPECT_NEAR(avg.swd, (rep.positions[0].swd + rep.positions[1].swd) / 2, 1e-15);
  EXPECT_NEAR(avg.mmd, (rep.positions[0].mmd + rep.positions[1].mmd) / 2, 1e-15);
  MetricConfig no_vel;
  no_vel.with_velocities = false;
  EXPECT_TRUE(evaluate(traj, ref, no_vel).velocities.empty());
}

TEST(Evaluate, RejectsMisalignedTrajectories) {
  MarginalSet ref{1, {}};
  for (int i = 0; i < 3; ++i) ref.marginals.push_back({double(i), normals(5, 1, Rng(i)), {}, false});
  TimeGrid short_grid{{0.0, 1.0}, 2, 0.2};
  EXPECT_THROW(evaluate(TrajectoryCache<double>(Direction::forward, 0, 1, short_grid, 5, 1), ref), DimensionError);
  TimeGrid shifted{{0.0, 1.0, 2.5}, 2, 0.2};
  EXPECT_THROW(evaluate(TrajectoryCache<double>(Direction::forward, 0, 2, shifted, 5, 1), ref), DimensionError);
}
