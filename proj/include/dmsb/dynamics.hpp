#pragma once

// Phase-space Euler-Maruyama for dm = [v, g z] dt + [0, g] dW and its
// reverse-time counterpart. Noise and control act on the velocity block only.

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "dmsb/errors.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

/// B samples of m = [x, v], stored as a B x 2d row-major matrix.
template <class Scalar>
struct PhaseBatch {
  RowMatrix<Scalar> m;

  PhaseBatch() = default;
  PhaseBatch(Eigen::Index batch, int dim) : m(RowMatrix<Scalar>::Zero(batch, 2 * dim)) {}
  explicit PhaseBatch(RowMatrix<Scalar> state) : m(std::move(state)) {
    if (m.cols() % 2 != 0) throw DimensionError("phase batch needs an even column count");
  }

  static PhaseBatch from(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& v) {
    if (x.rows() != v.rows() || x.cols() != v.cols())
      throw DimensionError("position and velocity blocks differ in shape");
    PhaseBatch p(x.rows(), static_cast<int>(x.cols()));
    p.x() = x;
    p.v() = v;
    return p;
  }

  Eigen::Index size() const { return m.rows(); }
  int dim() const { return static_cast<int>(m.cols() / 2); }
  auto x() { return m.leftCols(dim()); }
  auto x() const { return m.leftCols(dim()); }
  auto v() { return m.rightCols(dim()); }
  auto v() const { return m.rightCols(dim()); }

  bool finite() const { return m.allFinite(); }
};

struct TimeGrid {
  std::vector<double> marginal_times;
  int steps_per_segment = 100;
  double g = 0.2;

  void validate() const {
    if (marginal_times.size() < 2) throw ConfigError("time grid needs at least two marginal times");
    for (std::size_t i = 1; i < marginal_times.size(); ++i)
      if (!(marginal_times[i] > marginal_times[i - 1]))
        throw ConfigError("marginal times must be strictly increasing");
    if (steps_per_segment < 1) throw ConfigError("steps_per_segment must be >= 1");
    if (!(g > 0.0)) throw ConfigError("diffusion scale g must be positive");
  }

  int segments() const { return static_cast<int>(marginal_times.size()) - 1; }
  int total_steps() const { return segments() * steps_per_segment; }
  int marginal_step(int i) const { return i * steps_per_segment; }

  double dt(int segment) const {
    return (marginal_times[segment + 1] - marginal_times[segment]) / steps_per_segment;
  }

  /// Segment that the transition starting at global step `step` belongs to.
  int segment_of(int step) const { return std::min(step / steps_per_segment, segments() - 1); }

  double time_at(int step) const {
    if (step >= total_steps()) return marginal_times.back();
    const int seg = segment_of(step);
    return marginal_times[seg] + (step - seg * steps_per_segment) * dt(seg);
  }
};

/// States along simulated trajectories, always indexed by increasing physical time:
/// states(b, k) is sample b at time times[k] whichever way it was simulated.
template <class Scalar>
struct TrajectoryCache {
  Direction direction = Direction::forward;
  int first_marginal = 0;
  int last_marginal = 0;
  int steps_per_segment = 1;
  int dim = 0;
  Eigen::Index batch = 0;
  std::vector<double> times;
  std::vector<Scalar> states;  // batch x (steps + 1) x 2d
  std::string producer;

  TrajectoryCache() = default;
  TrajectoryCache(Direction dir, int first, int last, const TimeGrid& grid, Eigen::Index b, int d)
      : direction(dir), first_marginal(first), last_marginal(last),
        steps_per_segment(grid.steps_per_segment), dim(d), batch(b) {
    const int s0 = grid.marginal_step(first), s1 = grid.marginal_step(last);
    for (int s = s0; s <= s1; ++s) times.push_back(grid.time_at(s));
    states.assign(static_cast<std::size_t>(b) * times.size() * 2 * d, Scalar(0));
  }

  int steps() const { return static_cast<int>(times.size()) - 1; }
  int width() const { return 2 * dim; }

  /// Local step index of marginal i (must lie inside the cached span).
  int marginal_index(int i) const {
    if (i < first_marginal || i > last_marginal)
      throw DimensionError("marginal " + std::to_string(i) + " is outside the cached span");
    return (i - first_marginal) * steps_per_segment;
  }

  std::size_t offset(Eigen::Index b, int k) const {
    return (static_cast<std::size_t>(b) * times.size() + k) * width();
  }
  std::span<const Scalar> state(Eigen::Index b, int k) const {
    return {states.data() + offset(b, k), static_cast<std::size_t>(width())};
  }
  std::span<Scalar> state(Eigen::Index b, int k) {
    return {states.data() + offset(b, k), static_cast<std::size_t>(width())};
  }

  PhaseBatch<Scalar> slice(int k) const {
    PhaseBatch<Scalar> p(batch, dim);
    for (Eigen::Index b = 0; b < batch; ++b) {
      auto s = state(b, k);
      for (int j = 0; j < width(); ++j) p.m(b, j) = s[j];
    }
    return p;
  }

  void set_slice(int k, const PhaseBatch<Scalar>& p) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      auto s = state(b, k);
      for (int j = 0; j < width(); ++j) s[j] = p.m(b, j);
    }
  }
};

// Non-deduced so that Eigen expressions convert at the call site.
template <class Scalar>
using Control = std::type_identity_t<RowMatrix<Scalar>>;

/// x' = x + dt v ;  v' = v + dt g z + sqrt(dt) g eps
template <class Scalar>
PhaseBatch<Scalar> em_forward_step(const PhaseBatch<Scalar>& m, double dt, const Control<Scalar>& z, double g,
                                   const Control<Scalar>& eps) {
  if (z.rows() != m.size() || z.cols() != m.dim() || eps.rows() != m.size() || eps.cols() != m.dim())
    throw DimensionError("em_forward_step: control/noise shape does not match state");
  if (dt < 0.0) throw ConfigError("em_forward_step: negative step");
  PhaseBatch<Scalar> out = m;
  out.x() += Scalar(dt) * m.v();
  out.v() += Scalar(dt * g) * z + Scalar(std::sqrt(dt) * g) * eps;
  return out;
}

/// Reverse-time step from t to t - dt:
/// v_prev = v + dt g zhat + sqrt(dt) g eps ;  x_prev = x - dt v_prev
/// Moving x with the updated velocity makes x_next - x = dt v hold along both
/// forward and backward chains, so the two share the same position kinematics.
template <class Scalar>
PhaseBatch<Scalar> em_backward_step(const PhaseBatch<Scalar>& m, double dt, const Control<Scalar>& zhat, double g,
                                    const Control<Scalar>& eps) {
  if (zhat.rows() != m.size() || zhat.cols() != m.dim() || eps.rows() != m.size() ||
      eps.cols() != m.dim())
    throw DimensionError("em_backward_step: control/noise shape does not match state");
  if (dt < 0.0) throw ConfigError("em_backward_step: negative step");
  PhaseBatch<Scalar> out = m;
  out.v() += Scalar(dt * g) * zhat + Scalar(std::sqrt(dt) * g) * eps;
  out.x() -= Scalar(dt) * out.v();
  return out;
}

/// One independent normal stream per sample index.
class NoiseStreams {
 public:
  NoiseStreams(const Rng& rng, Eigen::Index batch) {
    streams_.reserve(batch);
    for (Eigen::Index b = 0; b < batch; ++b) streams_.push_back(rng.split(static_cast<std::uint64_t>(b)));
  }

  template <class Scalar>
  RowMatrix<Scalar> draw(int dim) {
    RowMatrix<Scalar> eps(static_cast<Eigen::Index>(streams_.size()), dim);
    for (std::size_t b = 0; b < streams_.size(); ++b)
      for (int j = 0; j < dim; ++j) eps(b, j) = static_cast<Scalar>(streams_[b].normal());
    return eps;
  }

 private:
  std::vector<Rng> streams_;
};

/// Simulates `policy` between marginals `first` and `last` (inclusive). Forward
/// runs start at t_first, backward runs start at t_last.
template <class Scalar, class Policy>
  requires ControlPolicy<Policy, Scalar>
TrajectoryCache<Scalar> simulate(const Policy& policy, const PhaseBatch<Scalar>& start, int first, int last,
                                 Direction direction, const TimeGrid& grid, const Rng& rng,
                                 bool use_ema = false) {
  if (first < 0 || last > grid.segments() || first >= last)
    throw ConfigError("simulate: span must satisfy 0 <= first < last <= N");
  if (!start.finite()) throw SimulationDiverged("simulate: non-finite start state", 0);

  TrajectoryCache<Scalar> cache(direction, first, last, grid, start.size(), start.dim());
  cache.producer = to_string(direction);
  NoiseStreams noise(rng.split("sde-noise"), start.size());
  std::vector<Scalar> t(static_cast<std::size_t>(start.size()));
  const int base = grid.marginal_step(first);
  const int steps = cache.steps();

  PhaseBatch<Scalar> m = start;
  if (direction == Direction::forward) {
    cache.set_slice(0, m);
    for (int k = 0; k < steps; ++k) {
      std::fill(t.begin(), t.end(), static_cast<Scalar>(cache.times[k]));
      const RowMatrix<Scalar> z = policy.eval(t, m.m, use_ema);
      m = em_forward_step(m, grid.dt(grid.segment_of(base + k)), z, grid.g, noise.draw<Scalar>(m.dim()));
      if (!m.finite()) throw SimulationDiverged("forward simulation produced a non-finite state", k + 1);
      cache.set_slice(k + 1, m);
    }
  } else {
    cache.set_slice(steps, m);
    for (int k = steps; k-- > 0;) {
      std::fill(t.begin(), t.end(), static_cast<Scalar>(cache.times[k + 1]));
      const RowMatrix<Scalar> zhat = policy.eval(t, m.m, use_ema);
      m = em_backward_step(m, grid.dt(grid.segment_of(base + k)), zhat, grid.g, noise.draw<Scalar>(m.dim()));
      if (!m.finite()) throw SimulationDiverged("backward simulation produced a non-finite state", k);
      cache.set_slice(k, m);
    }
  }
  return cache;
}

}  // namespace dmsb
