#pragma once

// Two-sample distances between point clouds (rows are samples).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dmsb/data.hpp"
#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

using Points = RowMatrix<double>;

namespace detail {

inline void require_pair(const Points& x, const Points& y, const char* who) {
  if (x.rows() == 0 || y.rows() == 0) throw DimensionError(std::string(who) + ": empty input");
  if (x.cols() != y.cols()) throw DimensionError(std::string(who) + ": dimension mismatch");
}

/// W_p^p between two sorted 1-D samples with uniform weights, via their
/// piecewise-constant quantile functions.
inline double wasserstein_pp_sorted(const std::vector<double>& a, const std::vector<double>& b, int p) {
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  std::size_t pos = 0;  // current quantile level in units of 1/(n m)
  double acc = 0.0;
  while (i < n && j < m) {
    const std::size_t next_a = (i + 1) * m, next_b = (j + 1) * n;
    const std::size_t next = std::min(next_a, next_b);
    const double diff = std::abs(a[i] - b[j]);
    acc += static_cast<double>(next - pos) * (p == 1 ? diff : std::pow(diff, p));
    pos = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return acc / static_cast<double>(n * m);
}

inline std::vector<double> project_sorted(const Points& x, const Eigen::Ref<const Eigen::RowVectorXd>& dir) {
  std::vector<double> out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = x.row(i).dot(dir);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<double> per_projection_wpp(const Points& x, const Points& y, const Points& dirs, int p) {
  if (p != 1 && p != 2) throw ConfigError("sliced Wasserstein order p must be 1 or 2");
  if (dirs.cols() != x.cols()) throw DimensionError("projection dimension mismatch");
  std::vector<double> w(dirs.rows());
  for (Eigen::Index k = 0; k < dirs.rows(); ++k)
    w[k] = wasserstein_pp_sorted(project_sorted(x, dirs.row(k)), project_sorted(y, dirs.row(k)), p);
  return w;
}

}  // namespace detail

/// Exact 1-D W_p between two samples.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b, int p) {
  if (a.empty() || b.empty()) throw DimensionError("wasserstein_1d: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return std::pow(detail::wasserstein_pp_sorted(a, b, p), 1.0 / p);
}

/// n_proj directions drawn uniformly on the unit sphere.
inline Points random_projections(int dim, int n_proj, std::uint64_t seed) {
  if (n_proj < 1) throw ConfigError("need at least one projection");
  Rng rng = Rng(seed).split("projections");
  Points dirs(n_proj, dim);
  for (int k = 0; k < n_proj; ++k) {
    double norm = 0.0;
    do {
      for (int j = 0; j < dim; ++j) dirs(k, j) = rng.normal();
      norm = dirs.row(k).norm();
    } while (norm == 0.0);
    dirs.row(k) /= norm;
  }
  return dirs;
}

inline double swd_with_projections(const Points& x, const Points& y, const Points& dirs, int p = 2) {
  detail::require_pair(x, y, "swd");
  const auto w = detail::per_projection_wpp(x, y, dirs, p);
  double mean = 0.0;
  for (double v : w) mean += v;
  return std::pow(mean / static_cast<double>(w.size()), 1.0 / p);
}

/// (mean over random directions of W_p^p)^(1/p)
inline double swd(const Points& x, const Points& y, int n_proj = 128, int p = 2, std::uint64_t seed = 0) {
  detail::require_pair(x, y, "swd");
  return swd_with_projections(x, y, random_projections(static_cast<int>(x.cols()), n_proj, seed), p);
}

inline double max_swd_with_projections(const Points& x, const Points& y, const Points& dirs, int p = 2) {
  detail::require_pair(x, y, "max_swd");
  const auto w = detail::per_projection_wpp(x, y, dirs, p);
  return std::pow(*std::max_element(w.begin(), w.end()), 1.0 / p);
}

/// Largest 1-D W_p over a sampled projection set (Monte-Carlo max-sliced distance).
inline double max_swd(const Points& x, const Points& y, int n_proj = 128, int p = 2, std::uint64_t seed = 0) {
  detail::require_pair(x, y, "max_swd");
  return max_swd_with_projections(x, y, random_projections(static_cast<int>(x.cols()), n_proj, seed), p);
}

/// Biased (V-statistic) MMD^2 averaged over Gaussian kernels exp(-|x-y|^2 / (2h)).
inline double mmd_with_bandwidths(const Points& x, const Points& y, const std::vector<double>& bandwidths) {
  detail::require_pair(x, y, "mmd");
  if (bandwidths.empty()) throw ConfigError("mmd needs at least one bandwidth");
  auto mean_kernel = [&](const Points& a, const Points& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const double d2 = (a.row(i) - b.row(j)).squaredNorm();
        for (double h : bandwidths) s += std::exp(-d2 / (2.0 * h));
      }
    return s / (static_cast<double>(a.rows()) * b.rows() * bandwidths.size());
  };
  const double v = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
  return std::max(v, 0.0);
}

/// Median squared distance over distinct pairs of the pooled sample.
inline double median_sq_distance(const Points& x, const Points& y) {
  Points pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(pooled.rows()) * (pooled.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) d.push_back((pooled.row(i) - pooled.row(j)).squaredNorm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

inline const std::vector<double>& default_mmd_multipliers() {
  static const std::vector<double> m{0.25, 0.5, 1.0, 2.0, 4.0};
  return m;
}

/// MMD^2 with bandwidths multiplier x median pairwise squared distance.
inline double mmd(const Points& x, const Points& y, const std::vector<double>& multipliers = default_mmd_multipliers()) {
  detail::require_pair(x, y, "mmd");
  const double med = median_sq_distance(x, y);
  std::vector<double> h;
  for (double m : multipliers) h.push_back(m * med);
  return mmd_with_bandwidths(x, y, h);
}

/// 2 E|X-Y| - E|X-X'| - E|Y-Y'|, within-sample terms over distinct pairs, clamped at 0.
inline double energy_distance(const Points& x, const Points& y) {
  detail::require_pair(x, y, "energy_distance");
  auto mean_dist = [](const Points& a, const Points& b, bool distinct) {
    double s = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (distinct && i == j) continue;
        s += (a.row(i) - b.row(j)).norm();
        ++count;
      }
    return count ? s / static_cast<double>(count) : 0.0;
  };
  const double v = 2.0 * mean_dist(x, y, false) - mean_dist(x, x, true) - mean_dist(y, y, true);
  return std::max(v, 0.0);
}

inline constexpr Eigen::Index kW1SmallMax = 512;

/// Exact equal-weight W1 by optimal assignment (Hungarian algorithm).
inline double w1_small(const Points& x, const Points& y) {
  detail::require_pair(x, y, "w1_small");
  const Eigen::Index n = x.rows();
  if (y.rows() != n) throw DimensionError("w1_small needs equal sample counts");
  if (n > kW1SmallMax) throw DimensionError("w1_small supports at most 512 samples");

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
  auto cost = [&](Eigen::Index i, Eigen::Index j) { return (x.row(i - 1) - y.row(j - 1)).norm(); };
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = p[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (Eigen::Index j = 1; j <= n; ++j) total += cost(p[j], j);
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Marginal-wise evaluation

struct MetricConfig {
  int n_proj = 128;
  int p = 2;
  std::uint64_t seed = 0;
  std::vector<double> mmd_multipliers = default_mmd_multipliers();
  bool with_w1 = false;  // exact W1 on the first min(n, m, 512) rows of each side
  bool with_velocities = true;
};

struct MetricRow {
  int index = 0;
  double time = 0.0;
  bool left_out = false;
  double swd = 0.0, mmd = 0.0, energy = 0.0, mswd = 0.0;
  std::optional<double> w1;
  Eigen::Index n_generated = 0, n_reference = 0;
};

struct MetricReport {
  std::vector<MetricRow> positions;
  std::vector<MetricRow> velocities;  // empty unless the reference carries velocities
  MetricConfig config;

  struct Averages {
    double swd = 0.0, mmd = 0.0, energy = 0.0, mswd = 0.0;
  };
  static Averages average(const std::vector<MetricRow>& rows) {
    Averages a;
    if (rows.empty()) return a;
    for (const auto& r : rows) a.swd += r.swd, a.mmd += r.mmd, a.energy += r.energy, a.mswd += r.mswd;
    const double n = static_cast<double>(rows.size());
    a.swd /= n, a.mmd /= n, a.energy /= n, a.mswd /= n;
    return a;
  }
};

inline MetricRow compare_samples(const Points& gen, const Points& ref, const MetricConfig& cfg) {
  MetricRow row;
  const Points dirs = random_projections(static_cast<int>(gen.cols()), cfg.n_proj, cfg.seed);
  row.swd = swd_with_projections(gen, ref, dirs, cfg.p);
  row.mswd = max_swd_with_projections(gen, ref, dirs, cfg.p);
  row.mmd = mmd(gen, ref, cfg.mmd_multipliers);
  row.energy = energy_distance(gen, ref);
  if (cfg.with_w1) {
    const Eigen::Index k = std::min({gen.rows(), ref.rows(), kW1SmallMax});
    row.w1 = w1_small(gen.topRows(k), ref.topRows(k));
  }
  row.n_generated = gen.rows();
  row.n_reference = ref.rows();
  return row;
}

/// Scores a full-horizon trajectory cache against every reference marginal.
template <class Scalar>
MetricReport evaluate(const TrajectoryCache<Scalar>& traj, const MarginalSet& reference, const MetricConfig& cfg = {}) {
  reference.validate();
  if (traj.first_marginal != 0 || traj.last_marginal != reference.segments())
    throw DimensionError("trajectory does not cover every reference marginal");
  if (traj.dim != reference.dim) throw DimensionError("trajectory and reference dimensions differ");
  MetricReport report;
  report.config = cfg;
  const bool vel = cfg.with_velocities && reference.has_velocities();
  for (int i = 0; i < reference.count(); ++i) {
    const int k = traj.marginal_index(i);
    if (std::abs(traj.times[k] - reference.marginals[i].time) > 1e-9 * std::max(1.0, std::abs(reference.marginals[i].time)))
      throw DimensionError("trajectory time " + std::to_string(traj.times[k]) + " does not match marginal time " +
                           std::to_string(reference.marginals[i].time));
    const auto slice = traj.slice(k);
    const Points gx = slice.x().template cast<double>();
    MetricRow row = compare_samples(gx, reference.marginals[i].positions, cfg);
    row.index = i;
    row.time = reference.marginals[i].time;
    row.left_out = reference.marginals[i].left_out;
    report.positions.push_back(row);
    if (vel) {
      const Points gv = slice.v().template cast<double>();
      MetricRow vrow = compare_samples(gv, *reference.marginals[i].velocities, cfg);
      vrow.index = i;
      vrow.time = row.time;
      vrow.left_out = row.left_out;
      report.velocities.push_back(vrow);
    }
  }
  return report;
}

}  // namespace dmsb
