#pragma once

// Phase-space mean-matching loss. The trainable policy's Euler increment at one
// end of a cached transition is regressed onto a label built from the fixed
// opposite-direction policy that produced the cache. Only velocity components
// enter the residual; the position block carries no trainable term.

#include <cmath>
#include <vector>

#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

/// Consecutive-time state pairs (m_lo at t, m_hi at t + dt) from one cache.
template <class Scalar>
struct TransitionBatch {
  PhaseBatch<Scalar> lo, hi;
  std::vector<Scalar> t;   // time of m_lo
  std::vector<Scalar> dt;  // step to m_hi

  Eigen::Index size() const { return lo.size(); }
};

template <class Scalar>
struct LossAndGrad {
  double loss = 0.0;
  ParamVector<Scalar> grad;
};

/// Uniform draw over (sample, step) pairs of a cache.
template <class Scalar>
TransitionBatch<Scalar> sample_transitions(const TrajectoryCache<Scalar>& cache, Eigen::Index batch_size,
                                           Rng& rng) {
  if (cache.batch == 0 || cache.steps() < 1) throw DimensionError("cannot sample transitions from an empty cache");
  TransitionBatch<Scalar> tb{PhaseBatch<Scalar>(batch_size, cache.dim), PhaseBatch<Scalar>(batch_size, cache.dim),
                             std::vector<Scalar>(batch_size), std::vector<Scalar>(batch_size)};
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    const auto b = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(cache.batch)));
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(cache.steps())));
    auto lo = cache.state(b, k), hi = cache.state(b, k + 1);
    for (int j = 0; j < cache.width(); ++j) {
      tb.lo.m(i, j) = lo[j];
      tb.hi.m(i, j) = hi[j];
    }
    tb.t[i] = static_cast<Scalar>(cache.times[k]);
    tb.dt[i] = static_cast<Scalar>(cache.times[k + 1] - cache.times[k]);
  }
  return tb;
}

namespace detail {

template <class Scalar>
std::vector<Scalar> shifted_times(const TransitionBatch<Scalar>& b) {
  std::vector<Scalar> t(b.t.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = b.t[i] + b.dt[i];
  return t;
}

template <class Scalar>
RowMatrix<Scalar> row_scale(const TransitionBatch<Scalar>& b, double g) {
  RowMatrix<Scalar> s(b.size(), 1);
  for (Eigen::Index i = 0; i < b.size(); ++i) s(i, 0) = static_cast<Scalar>(b.dt[i] * g);
  return s;
}

template <class Scalar>
double mean_squared_norm(const RowMatrix<Scalar>& r) {
  std::vector<std::size_t> bad;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) row += static_cast<double>(r(i, j)) * r(i, j);
    if (!std::isfinite(row)) bad.push_back(static_cast<std::size_t>(i));
    total += row;
  }
  if (!bad.empty()) throw NonFiniteError("mean-matching loss is non-finite", std::move(bad));
  return total / static_cast<double>(r.rows());
}

}  // namespace detail

/// Trains the forward policy on a cache simulated backward by `phi`:
///   r = dt g [z(t, m_lo) + zhat(t+dt, m_lo)] - (v_hi - v_lo + dt g zhat(t+dt, m_hi))
template <class Scalar, class RefPolicy>
  requires ControlPolicy<RefPolicy, Scalar>
LossAndGrad<Scalar> mm_loss_forward(const PolicyNet<Scalar>& theta, const RefPolicy& phi,
                                    const TransitionBatch<Scalar>& b, double g) {
  const std::vector<Scalar> t_hi = detail::shifted_times(b);
  const RowMatrix<Scalar> scale = detail::row_scale(b, g);
  const RowMatrix<Scalar> ref_lo = phi.eval(t_hi, b.lo.m, false);
  const RowMatrix<Scalar> ref_hi = phi.eval(t_hi, b.hi.m, false);
  RowMatrix<Scalar> label = b.hi.v() - b.lo.v() + (ref_hi.array().colwise() * scale.col(0).array()).matrix();

  LossAndGrad<Scalar> out;
  RowMatrix<Scalar> z;
  RowMatrix<Scalar> r;
  out.grad = theta.eval_and_backprop(b.t, b.lo.m, z, [&](const RowMatrix<Scalar>& zt) {
    r = ((zt + ref_lo).array().colwise() * scale.col(0).array()).matrix() - label;
    out.loss = detail::mean_squared_norm(r);
    const Scalar inv = Scalar(2.0 / static_cast<double>(b.size()));
    return RowMatrix<Scalar>((r.array().colwise() * scale.col(0).array()) * inv);
  });
  return out;
}

/// Trains the backward policy on a cache simulated forward by `theta`:
///   r = dt g [zhat(t+dt, m_hi) + z(t, m_hi)] - (v_lo - v_hi + dt g z(t, m_lo))
template <class Scalar, class RefPolicy>
  requires ControlPolicy<RefPolicy, Scalar>
LossAndGrad<Scalar> mm_loss_backward(const PolicyNet<Scalar>& phi, const RefPolicy& theta,
                                     const TransitionBatch<Scalar>& b, double g) {
  const std::vector<Scalar> t_hi = detail::shifted_times(b);
  const RowMatrix<Scalar> scale = detail::row_scale(b, g);
  const RowMatrix<Scalar> ref_hi = theta.eval(b.t, b.hi.m, false);
  const RowMatrix<Scalar> ref_lo = theta.eval(b.t, b.lo.m, false);
  RowMatrix<Scalar> label = b.lo.v() - b.hi.v() + (ref_lo.array().colwise() * scale.col(0).array()).matrix();

  LossAndGrad<Scalar> out;
  RowMatrix<Scalar> zh;
  RowMatrix<Scalar> r;
  out.grad = phi.eval_and_backprop(t_hi, b.hi.m, zh, [&](const RowMatrix<Scalar>& zt) {
    r = ((zt + ref_hi).array().colwise() * scale.col(0).array()).matrix() - label;
    out.loss = detail::mean_squared_norm(r);
    const Scalar inv = Scalar(2.0 / static_cast<double>(b.size()));
    return RowMatrix<Scalar>((r.array().colwise() * scale.col(0).array()) * inv);
  });
  return out;
}

}  // namespace dmsb
