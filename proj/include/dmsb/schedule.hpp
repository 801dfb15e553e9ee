#pragma once

// Bregman-iteration schedule over the decomposed constraint sets.
//
// A task's span is (anchor, ref_start): the optimized policy starts its SDE at
// marginal `anchor`, the reference policy is simulated from marginal `ref_start`
// toward the anchor. Forward-policy tasks therefore have anchor < ref_start and
// backward-policy tasks anchor > ref_start.
//
// Two parities alternate:
//   even: backward boundary passes k = M..1, forward boundary passes k = 0..M-1,
//         bridge optimizing phi (reference theta)
//   odd : forward boundary passes (carrying samples), backward boundary passes,
//         bridge optimizing theta (reference phi)
// An even iteration followed by an odd one is one pass of the training loop body.

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "dmsb/errors.hpp"

namespace dmsb {

enum class PolicyTag { theta, phi };
enum class TaskKind { boundary, bridge };
enum class Parity { even, odd };

inline const char* to_string(PolicyTag p) { return p == PolicyTag::theta ? "theta" : "phi"; }
inline const char* to_string(TaskKind k) { return k == TaskKind::boundary ? "boundary" : "bridge"; }
inline PolicyTag opposite(PolicyTag p) { return p == PolicyTag::theta ? PolicyTag::phi : PolicyTag::theta; }
inline Parity parity_of(int bi) { return bi % 2 == 0 ? Parity::even : Parity::odd; }

struct BPTask {
  TaskKind kind = TaskKind::boundary;
  std::pair<int, int> span{0, 1};  // (anchor, ref_start) marginal indices
  PolicyTag ref = PolicyTag::phi;
  PolicyTag opt = PolicyTag::theta;
  bool uses_carried_samples = false;

  int anchor() const { return span.first; }
  int ref_start() const { return span.second; }
  int lo() const { return std::min(span.first, span.second); }
  int hi() const { return std::max(span.first, span.second); }

  bool operator==(const BPTask&) const = default;
};

struct BISchedule {
  std::vector<BPTask> tasks;
  Parity parity = Parity::even;
};

/// Schedule over the given training-visible marginal indices (sorted, first = 0,
/// last = N; left-out marginals are simply absent).
inline BISchedule build_schedule(const std::vector<int>& visible, Parity parity) {
  if (visible.size() < 2) throw ConfigError("schedule needs at least two visible marginals (N >= 1)");
  for (std::size_t i = 1; i < visible.size(); ++i)
    if (visible[i] <= visible[i - 1]) throw ConfigError("visible marginal indices must be increasing");
  const int m = static_cast<int>(visible.size()) - 1;

  auto backward_passes = [&](std::vector<BPTask>& out) {
    for (int k = m; k >= 1; --k)
      out.push_back({TaskKind::boundary, {visible[k], visible[k - 1]}, PolicyTag::theta, PolicyTag::phi, false});
  };
  auto forward_passes = [&](std::vector<BPTask>& out, bool carried) {
    for (int k = 0; k < m; ++k)
      out.push_back({TaskKind::boundary, {visible[k], visible[k + 1]}, PolicyTag::phi, PolicyTag::theta, carried});
  };

  BISchedule s;
  s.parity = parity;
  if (parity == Parity::even) {
    backward_passes(s.tasks);
    forward_passes(s.tasks, false);
    s.tasks.push_back({TaskKind::bridge, {visible.back(), visible.front()}, PolicyTag::theta, PolicyTag::phi, true});
  } else {
    forward_passes(s.tasks, true);
    backward_passes(s.tasks);
    s.tasks.push_back({TaskKind::bridge, {visible.front(), visible.back()}, PolicyTag::phi, PolicyTag::theta, true});
  }
  return s;
}

inline BISchedule build_schedule(int segments, Parity parity) {
  if (segments < 1) throw ConfigError("schedule needs N >= 1 segments");
  std::vector<int> visible(segments + 1);
  for (int i = 0; i <= segments; ++i) visible[i] = i;
  return build_schedule(visible, parity);
}

/// Invariant violations of a task sequence (empty when valid). `tasks` may span
/// several consecutive iterations.
inline std::vector<std::string> schedule_violations(const std::vector<BPTask>& tasks, const std::vector<int>& visible) {
  std::vector<std::string> errs;
  auto where = [](std::size_t i) { return "task " + std::to_string(i) + ": "; };
  auto adjacent = [&](int a, int b) {
    for (std::size_t i = 1; i < visible.size(); ++i)
      if (visible[i - 1] == a && visible[i] == b) return true;
    return false;
  };
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const BPTask& t = tasks[i];
    if (t.ref == t.opt) errs.push_back(where(i) + "reference and optimized policy coincide");
    const bool fwd = t.opt == PolicyTag::theta;
    if (fwd != (t.anchor() < t.ref_start())) errs.push_back(where(i) + "span direction does not match policy");
    if (t.kind == TaskKind::boundary && !adjacent(t.lo(), t.hi()))
      errs.push_back(where(i) + "boundary task does not span exactly one visible segment");
    if (t.kind == TaskKind::bridge && (t.lo() != visible.front() || t.hi() != visible.back()))
      errs.push_back(where(i) + "bridge task does not span the full horizon");
    if (i > 0) {
      const BPTask& p = tasks[i - 1];
      const bool overlap = std::min(p.hi(), t.hi()) > std::max(p.lo(), t.lo());
      if (overlap && p.opt == t.opt)
        errs.push_back(where(i) + "optimizes " + to_string(t.opt) + " against a reference it just produced");
    }
  }
  return errs;
}

/// Per-iteration coverage check: each visible segment once per direction, one
/// closing bridge.
inline std::vector<std::string> coverage_violations(const BISchedule& s, const std::vector<int>& visible) {
  std::vector<std::string> errs;
  const std::size_t m = visible.size() - 1;
  std::vector<int> fwd(m, 0), bwd(m, 0);
  int bridges = 0;
  for (const auto& t : s.tasks) {
    if (t.kind == TaskKind::bridge) {
      ++bridges;
      continue;
    }
    for (std::size_t k = 0; k < m; ++k)
      if (t.lo() == visible[k] && t.hi() == visible[k + 1]) ++(t.opt == PolicyTag::theta ? fwd : bwd)[k];
  }
  for (std::size_t k = 0; k < m; ++k)
    if (fwd[k] != 1 || bwd[k] != 1)
      errs.push_back("segment " + std::to_string(k) + " visited " + std::to_string(fwd[k]) + " forward / " +
                     std::to_string(bwd[k]) + " backward");
  if (bridges != 1) errs.push_back("expected exactly one bridge task, found " + std::to_string(bridges));
  if (s.tasks.empty() || s.tasks.back().kind != TaskKind::bridge) errs.push_back("iteration must end with the bridge");
  return errs;
}

}  // namespace dmsb
