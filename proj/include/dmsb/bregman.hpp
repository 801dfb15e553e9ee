#pragma once

// Training orchestration: per-task Bregman projections (half-bridge mean matching
// against the opposite-direction reference), the alternating-parity iteration
// loop, and forward sampling of the learned bridge.

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dmsb/data.hpp"
#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/langevin.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/objective.hpp"
#include "dmsb/random.hpp"
#include "dmsb/schedule.hpp"

namespace dmsb {

using Net = PolicyNet<float>;
using Cache = TrajectoryCache<float>;
using Batch = PhaseBatch<float>;

/// How the previous bridge's trajectories seed later tasks.
///  none:     every anchor velocity starts from N(0, I).
///  interior: anchor velocities at interior marginals start from the nearest
///            carried sample; the two end marginals stay fresh. Converges faster
///            when every marginal is observed, but across a held-out marginal
///            the carried velocities feed back into themselves and grow.
///  all:      warm-start at every marginal and start bridge tasks from the
///            carried phase points. Drifts even without held-out marginals.
enum class CarryMode { none, interior, all };

inline const char* to_string(CarryMode c) {
  return c == CarryMode::none ? "none" : c == CarryMode::interior ? "interior" : "all";
}

inline CarryMode carry_mode_from_string(const std::string& s) {
  for (CarryMode c : {CarryMode::none, CarryMode::interior, CarryMode::all})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown carry mode '" + s + "' (expected none, interior or all)");
}

struct TrainConfig {
  ArchConfig arch;
  int steps_per_segment = 100;
  double g = 0.2;
  int n_bi = 1;
  int inner_iters = 200;
  int cache_size = 4096;
  int batch_size = 256;
  AdamWConfig adamw{};
  double ema_decay = 0.999;
  LangevinConfig langevin{};
  bool use_ground_truth_velocity = false;
  // L = a L_MM + (1 - a) L_reg; only a = 1 is supported.
  double mm_weight = 1.0;
  std::uint64_t seed = 0;
  int log_every = 1;
  CarryMode carry = CarryMode::none;

  void validate() const {
    arch.validate();
    langevin.validate();
    if (steps_per_segment < 1) throw ConfigError("steps_per_segment must be >= 1");
    if (!(g > 0.0)) throw ConfigError("g must be positive");
    if (n_bi < 0) throw ConfigError("n_bi must be >= 0");
    if (inner_iters < 0) throw ConfigError("inner_iters must be >= 0");
    if (cache_size < 1) throw ConfigError("cache_size must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adamw.lr > 0.0)) throw ConfigError("lr must be positive");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (mm_weight != 1.0) throw ConfigError("the SB regularizer term is not implemented; mm_weight must be 1");
  }

  TimeGrid grid(const std::vector<double>& times) const {
    TimeGrid grid{times, steps_per_segment, g};
    grid.validate();
    return grid;
  }
};

struct TrainState {
  Net theta;
  Net phi;
  std::optional<Cache> carried;  // full-horizon trajectories from the latest bridge task
  int bi = 0;

  Net& policy(PolicyTag tag) { return tag == PolicyTag::theta ? theta : phi; }
  const Net& policy(PolicyTag tag) const { return tag == PolicyTag::theta ? theta : phi; }
};

inline TrainState init_state(const TrainConfig& cfg, int dim) {
  ArchConfig a = cfg.arch;
  a.state_dim = dim;
  ArchConfig b = a;
  b.param_init_seed = a.param_init_seed + 1;
  return TrainState{Net(a, Direction::forward, cfg.ema_decay), Net(b, Direction::backward, cfg.ema_decay), {}, 0};
}

struct StepRecord {
  int bi = 0;
  int bp_index = 0;
  BPTask task;
  int step = 0;
  double loss = 0.0;
};

struct BpSummary {
  int bi = 0;
  int bp_index = 0;
  BPTask task;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool flagged = false;  // final > 1.5 x initial
};

struct TrainObserver {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const BpSummary&)> on_bp;
  std::function<void(const TrainState&)> on_iteration;
};

struct SubsetResult {
  Cache cache;
  std::vector<Eigen::Index> start_rows;  // rows of the start marginal drawn as initial positions (empty if carried)
  BpSummary summary;
};

namespace detail {

inline RowMatrix<float> to_float(const RowMatrix<double>& m) { return m.cast<float>(); }

inline RowMatrix<float> gaussian(Eigen::Index n, int d, Rng rng) {
  RowMatrix<float> out(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = static_cast<float>(rng.normal());
  return out;
}

/// For each query position, the velocity of the carried sample nearest in position.
inline RowMatrix<float> nearest_velocities(const RowMatrix<float>& x, const Batch& carried) {
  RowMatrix<float> v(x.rows(), x.cols());
  const auto cx = carried.x();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (Eigen::Index j = 0; j < cx.rows(); ++j) {
      const float dist = (cx.row(j) - x.row(i)).squaredNorm();
      if (dist < best_d) best_d = dist, best = j;
    }
    v.row(i) = carried.v().row(best);
  }
  return v;
}

inline Batch take_rows(const Batch& src, Eigen::Index n) {
  Batch out(n, src.dim());
  for (Eigen::Index i = 0; i < n; ++i) out.m.row(i) = src.m.row(i % src.size());
  return out;
}

}  // namespace detail

/// Phase points at marginal `k`: positions drawn from the data, velocities from
/// ground truth or Langevin, started from N(0, I) or, per cfg.carry, from the
/// velocity of the nearest carried sample.
inline Batch draw_anchor_batch(const TrainState& state, const MarginalSet& data, int k, Eigen::Index n,
                               const TrainConfig& cfg, const Rng& rng, bool use_ema,
                               std::vector<Eigen::Index>* rows_out = nullptr) {
  const Marginal& marg = data.marginals.at(k);
  if (marg.size() == 0) throw ConfigError("marginal " + std::to_string(k) + " has no samples");
  Rng pick = rng.split("rows");
  std::vector<Eigen::Index> rows(n);
  for (auto& r : rows) r = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(marg.size())));

  RowMatrix<float> x(n, data.dim), v;
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = marg.positions.row(rows[i]).cast<float>();

  if (cfg.use_ground_truth_velocity && marg.velocities) {
    v.resize(n, data.dim);
    for (Eigen::Index i = 0; i < n; ++i) v.row(i) = marg.velocities->row(rows[i]).cast<float>();
  } else {
    RowMatrix<float> v0;
    const auto& c = state.carried;
    const bool warm = c && (cfg.carry == CarryMode::all ? k >= c->first_marginal && k <= c->last_marginal
                            : cfg.carry == CarryMode::interior ? k > c->first_marginal && k < c->last_marginal
                                                               : false);
    if (warm)
      v0 = detail::nearest_velocities(x, state.carried->slice(state.carried->marginal_index(k)));
    else
      v0 = detail::gaussian(n, data.dim, rng.split("v-init"));
    v = velocity_langevin<float>(x, v0, state.theta, state.phi, marg.time, cfg.g, cfg.langevin, rng.split("langevin"),
                                 use_ema);
  }
  if (rows_out) *rows_out = std::move(rows);
  return Batch::from(x, v);
}

/// One Bregman projection: simulate the reference policy, then fit the optimized
/// policy to it by mean matching.
inline SubsetResult opt_subset(TrainState& state, const BPTask& task, const MarginalSet& data, const TrainConfig& cfg,
                               const TimeGrid& grid, const Rng& rng, int bi = 0, int bp_index = 0,
                               const TrainObserver* obs = nullptr) {
  if (task.ref == task.opt) throw ConfigError("reference and optimized policy must differ");
  const int start = task.ref_start();
  SubsetResult res;

  Batch start_batch;
  if (cfg.carry == CarryMode::all && task.kind == TaskKind::bridge && task.uses_carried_samples && state.carried) {
    start_batch = detail::take_rows(state.carried->slice(state.carried->marginal_index(start)), cfg.cache_size);
  } else {
    start_batch = draw_anchor_batch(state, data, start, cfg.cache_size, cfg, rng.split("anchor"), false, &res.start_rows);
  }

  const Direction dir = task.ref == PolicyTag::theta ? Direction::forward : Direction::backward;
  res.cache = simulate<float>(state.policy(task.ref), start_batch, task.lo(), task.hi(), dir, grid, rng.split("simulate"));
  res.cache.producer = to_string(task.ref);

  Net& opt = state.policy(task.opt);
  const Net& ref = state.policy(task.ref);
  Rng batches = rng.split("minibatch");
  std::vector<double> losses;
  losses.reserve(cfg.inner_iters);
  for (int it = 0; it < cfg.inner_iters; ++it) {
    const auto tb = sample_transitions(res.cache, cfg.batch_size, batches);
    const auto lg = task.opt == PolicyTag::theta ? mm_loss_forward(opt, ref, tb, cfg.g) : mm_loss_backward(opt, ref, tb, cfg.g);
    opt.adamw_step(lg.grad, cfg.adamw);
    losses.push_back(lg.loss);
    if (obs && obs->on_step && (it % cfg.log_every == 0 || it + 1 == cfg.inner_iters))
      obs->on_step(StepRecord{bi, bp_index, task, it, lg.loss});
  }

  res.summary = BpSummary{bi, bp_index, task, 0.0, 0.0, false};
  if (!losses.empty()) {
    const std::size_t w = std::max<std::size_t>(1, losses.size() / 10);
    for (std::size_t i = 0; i < w; ++i) {
      res.summary.initial_loss += losses[i] / w;
      res.summary.final_loss += losses[losses.size() - 1 - i] / w;
    }
    res.summary.flagged = res.summary.final_loss > 1.5 * res.summary.initial_loss;
  }
  if (obs && obs->on_bp) obs->on_bp(res.summary);

  if (task.kind == TaskKind::bridge) state.carried = res.cache;
  return res;
}

/// Runs Bregman iterations state.bi .. cfg.n_bi - 1. Every random draw is keyed by
/// (seed, iteration, task), so a resumed run reproduces an uninterrupted one.
inline void train(TrainState& state, const MarginalSet& data, const TrainConfig& cfg, const TrainObserver& obs = {}) {
  cfg.validate();
  data.validate();
  const TimeGrid grid = cfg.grid(data.times());
  if (state.theta.arch().state_dim != data.dim) throw DimensionError("policy dimension differs from data dimension");
  const std::vector<int> visible = data.visible();
  const Rng root = Rng(cfg.seed).split("train");

  for (int bi = state.bi; bi < cfg.n_bi; ++bi) {
    const BISchedule schedule = build_schedule(visible, parity_of(bi));
    const Rng iter_rng = root.split(static_cast<std::uint64_t>(bi));
    for (std::size_t j = 0; j < schedule.tasks.size(); ++j)
      opt_subset(state, schedule.tasks[j], data, cfg, grid, iter_rng.split(j), bi, static_cast<int>(j), &obs);
    state.bi = bi + 1;
    if (obs.on_iteration) obs.on_iteration(state);
  }
}

inline TrainState train(const MarginalSet& data, const TrainConfig& cfg, const TrainObserver& obs = {}) {
  TrainState state = init_state(cfg, data.dim);
  train(state, data, cfg, obs);
  return state;
}

/// Pushes data at t_0 forward through every segment with the forward policy.
inline Cache sample(const TrainState& state, const MarginalSet& data, const TrainConfig& cfg, Eigen::Index n_samples,
                    const Rng& rng, bool use_ema = true) {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  const TimeGrid grid = cfg.grid(data.times());
  const Batch start = draw_anchor_batch(state, data, 0, n_samples, cfg, rng.split("anchor"), use_ema);
  Cache out = simulate<float>(state.theta, start, 0, grid.segments(), Direction::forward, grid, rng.split("simulate"), use_ema);
  out.producer = "theta";
  return out;
}

}  // namespace dmsb
