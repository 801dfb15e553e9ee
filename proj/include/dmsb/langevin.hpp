#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

struct LangevinConfig {
  double snr = 0.15;
  int n_steps = 1;
  double score_norm_floor = 1e-12;
  // sigma <= 2 r^2 * max_step_ratio, i.e. the score is treated as at least
  // noise-sized. Keeps degenerate or poorly learned scores from blowing up v.
  double max_step_ratio = 1.0;

  void validate() const {
    if (!(snr > 0.0)) throw ConfigError("langevin snr must be positive");
    if (n_steps < 0) throw ConfigError("langevin n_steps must be >= 0");
    if (!(score_norm_floor > 0.0)) throw ConfigError("score_norm_floor must be positive");
    if (!(max_step_ratio > 0.0)) throw ConfigError("max_step_ratio must be positive");
  }
};

/// Per-call diagnostics.
struct LangevinTrace {
  std::vector<double> sigma;
  int floored_steps = 0;
};

namespace detail {

template <class Derived>
double mean_row_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() == 0) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += std::sqrt(static_cast<double>(a.row(i).squaredNorm()));
  return s / static_cast<double>(a.rows());
}

}  // namespace detail

/// Langevin correction of velocities given fixed positions, using the implicit
/// conditional score grad_v log p = (z + zhat) / g. Positions are never modified.
template <class Scalar, class Fwd, class Bwd>
  requires ControlPolicy<Fwd, Scalar> && ControlPolicy<Bwd, Scalar>
RowMatrix<Scalar> velocity_langevin(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& v_init, const Fwd& theta,
                                    const Bwd& phi, double t_i, double g, const LangevinConfig& cfg,
                                    const Rng& rng, bool use_ema = false, LangevinTrace* trace = nullptr) {
  cfg.validate();
  if (x.rows() != v_init.rows() || x.cols() != v_init.cols())
    throw DimensionError("velocity_langevin: position and velocity shapes differ");

  PhaseBatch<Scalar> m = PhaseBatch<Scalar>::from(x, v_init);
  const std::vector<Scalar> t(static_cast<std::size_t>(x.rows()), static_cast<Scalar>(t_i));
  NoiseStreams noise(rng.split("langevin-noise"), x.rows());
  const double max_sigma = 2.0 * cfg.snr * cfg.snr * cfg.max_step_ratio;

  for (int step = 0; step < cfg.n_steps; ++step) {
    const RowMatrix<Scalar> eps = noise.draw<Scalar>(m.dim());
    const RowMatrix<Scalar> drift = theta.eval(t, m.m, use_ema) + phi.eval(t, m.m, use_ema);
    const double eps_norm = detail::mean_row_norm(eps);
    const double drift_norm = detail::mean_row_norm(drift);
    const double denom = drift_norm * drift_norm;
    if (denom < cfg.score_norm_floor && trace) ++trace->floored_steps;
    double sigma = 2.0 * cfg.snr * cfg.snr * g * g * eps_norm * eps_norm / std::max(denom, cfg.score_norm_floor);
    sigma = std::min(sigma, max_sigma);
    if (trace) trace->sigma.push_back(sigma);

    m.v() += Scalar(sigma / g) * drift + Scalar(std::sqrt(2.0 * sigma)) * eps;
    if (!m.finite()) throw SimulationDiverged("langevin produced a non-finite velocity", static_cast<std::size_t>(step));
  }
  return RowMatrix<Scalar>(m.v());
}

}  // namespace dmsb
