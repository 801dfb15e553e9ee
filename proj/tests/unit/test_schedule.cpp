#include <gtest/gtest.h>

#include "dmsb/schedule.hpp"

using namespace dmsb;

namespace {

std::vector<int> iota(int n) {
  std::vector<int> v(n + 1);
  for (int i = 0; i <= n; ++i) v[i] = i;
  return v;
}

BPTask fwd(int a, int b, bool carried = false) {
  return {TaskKind::boundary, {a, b}, PolicyTag::phi, PolicyTag::theta, carried};
}
BPTask bwd(int a, int b) { return {TaskKind::boundary, {a, b}, PolicyTag::theta, PolicyTag::phi, false}; }

}  // namespace

TEST(Schedule, ThreeMarginalBlockOrder) {
  // Backward passes t2->t1, t1->t0; forward passes t0->t1, t1->t2; bridge fitting phi.
  // Then forward passes reusing samples; backward passes; bridge fitting theta.
  const auto even = build_schedule(2, Parity::even);
  const std::vector<BPTask> expect_even = {
      bwd(2, 1), bwd(1, 0), fwd(0, 1), fwd(1, 2),
      {TaskKind::bridge, {2, 0}, PolicyTag::theta, PolicyTag::phi, true}};
  EXPECT_EQ(even.tasks, expect_even);
  const auto odd = build_schedule(2, Parity::odd);
  const std::vector<BPTask> expect_odd = {
      fwd(0, 1, true), fwd(1, 2, true), bwd(2, 1), bwd(1, 0),
      {TaskKind::bridge, {0, 2}, PolicyTag::phi, PolicyTag::theta, true}};
  EXPECT_EQ(odd.tasks, expect_odd);
}

TEST(Schedule, InvariantsHoldUpToEightSegments) {
  for (int n = 1; n <= 8; ++n) {
    const auto visible = iota(n);
    std::vector<BPTask> run;
    for (int bi = 0; bi < 4; ++bi) {
      const auto s = build_schedule(n, parity_of(bi));
      EXPECT_EQ(s.tasks.size(), static_cast<std::size_t>(2 * n + 1));
      EXPECT_TRUE(coverage_violations(s, visible).empty()) << "N=" << n;
      run.insert(run.end(), s.tasks.begin(), s.tasks.end());
    }
    const auto errs = schedule_violations(run, visible);
    EXPECT_TRUE(errs.empty()) << "N=" << n << ": " << (errs.empty() ? "" : errs.front());
  }
}

TEST(Schedule, SingleSegmentReducesToAlternatingHalfBridges) {
  const auto s = build_schedule(1, Parity::even);
  ASSERT_EQ(s.tasks.size(), 3u);
  EXPECT_EQ(s.tasks[0].opt, PolicyTag::phi);
  EXPECT_EQ(s.tasks[1].opt, PolicyTag::theta);
  EXPECT_EQ(s.tasks[2].opt, PolicyTag::phi);
  for (const auto& t : s.tasks) {
    EXPECT_EQ(t.lo(), 0);
    EXPECT_EQ(t.hi(), 1);
  }
}

TEST(Schedule, LeftOutMarginalAnchorsNoBoundaryTask) {
  const std::vector<int> visible = {0, 1, 3, 4};
  for (Parity p : {Parity::even, Parity::odd}) {
    const auto s = build_schedule(visible, p);
    for (const auto& t : s.tasks) {
      EXPECT_NE(t.anchor(), 2);
      EXPECT_NE(t.ref_start(), 2);
    }
    EXPECT_TRUE(coverage_violations(s, visible).empty());
    EXPECT_TRUE(schedule_violations(s.tasks, visible).empty());
  }
}

TEST(Schedule, RejectsDegenerateInput) {
  EXPECT_THROW(build_schedule(0, Parity::even), ConfigError);
  EXPECT_THROW(build_schedule(std::vector<int>{0}, Parity::even), ConfigError);
  EXPECT_THROW(build_schedule(std::vector<int>{0, 2, 1}, Parity::even), ConfigError);
}

TEST(Schedule, ViolationCheckerCatchesBrokenSequences) {
  const auto visible = iota(2);
  // Optimizing theta twice in a row on overlapping spans.
  EXPECT_FALSE(schedule_violations({fwd(0, 1), fwd(0, 1)}, visible).empty());
  // Direction mismatch.
  EXPECT_FALSE(schedule_violations({{TaskKind::boundary, {1, 0}, PolicyTag::phi, PolicyTag::theta, false}}, visible).empty());
  // Boundary over two segments.
  EXPECT_FALSE(schedule_violations({fwd(0, 2)}, visible).empty());
  // Same policy as reference and optimized.
  EXPECT_FALSE(schedule_violations({{TaskKind::boundary, {0, 1}, PolicyTag::theta, PolicyTag::theta, false}}, visible).empty());
}
