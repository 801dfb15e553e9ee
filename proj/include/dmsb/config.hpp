#pragma once

// Run configuration shared by every CLI command. The JSON form is flat; each
// key is also accepted as a command-line flag of the same name.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsb/bregman.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/metrics.hpp"

namespace dmsb {

struct RunConfig {
  // dataset
  std::string dataset = "gmm";           // builtin generator name, or "csv"
  std::vector<std::string> data_paths;   // one file (index column) or one file per marginal
  int n_per_marginal = 2000;             // builtin generators only
  int dim = 0;                           // 0 = infer from data
  std::vector<double> times;             // empty = generator / CSV defaults
  int leave_out = -1;                    // interior marginal index, -1 = none
  bool use_ground_truth_velocity = false;
  // dynamics and training
  int steps_per_segment = 100;
  double g = 0.2;
  int n_bi = 1;
  int inner_iters = 200;
  int cache_size = 4096;
  int batch_size = 256;
  double lr = 2e-4;
  double weight_decay = 0.0;
  double ema_decay = 0.999;
  double snr = 0.15;
  int langevin_steps = 1;
  int hidden_width = 128;
  int num_residual_blocks = 2;
  int time_embed_dim = 64;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;
  int log_every = 1;
  std::string carry = "none";           // none | interior | all
  // sampling and evaluation
  std::string output_dir = "dmsb-out";
  int n_samples = 1000;
  int n_proj = 128;
  int swd_p = 2;
  bool with_w1 = false;
  int threads = 1;

  void validate() const {
    if (dataset.empty()) throw ConfigError("dataset must be named");
    if (dataset == "csv" && data_paths.empty()) throw ConfigError("dataset 'csv' needs data_paths");
    auto positive = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(n_per_marginal, "n_per_marginal");
    positive(steps_per_segment, "steps_per_segment");
    positive(inner_iters + 1, "inner_iters + 1");
    positive(cache_size, "cache_size");
    positive(batch_size, "batch_size");
    positive(hidden_width, "hidden_width");
    positive(num_residual_blocks, "num_residual_blocks");
    positive(checkpoint_every, "checkpoint_every");
    positive(log_every, "log_every");
    positive(n_samples, "n_samples");
    positive(n_proj, "n_proj");
    positive(swd_p, "swd_p");
    positive(threads, "threads");
    if (n_bi < 0) throw ConfigError("n_bi must be >= 0");
    if (dim < 0) throw ConfigError("dim must be >= 0");
    if (langevin_steps < 0) throw ConfigError("langevin_steps must be >= 0");
    if (!(g > 0.0)) throw ConfigError("g must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in (0, 1)");
    if (!(snr > 0.0)) throw ConfigError("snr must be positive");
    carry_mode_from_string(carry);
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw ConfigError("times must be strictly increasing");
  }

  TrainConfig train_config(int state_dim) const {
    TrainConfig c;
    c.arch.state_dim = state_dim;
    c.arch.hidden_width = hidden_width;
    c.arch.num_residual_blocks = num_residual_blocks;
    c.arch.time_embed_dim = time_embed_dim;
    c.arch.param_init_seed = seed;
    c.steps_per_segment = steps_per_segment;
    c.g = g;
    c.n_bi = n_bi;
    c.inner_iters = inner_iters;
    c.cache_size = cache_size;
    c.batch_size = batch_size;
    c.adamw.lr = lr;
    c.adamw.weight_decay = weight_decay;
    c.ema_decay = ema_decay;
    c.langevin.snr = snr;
    c.langevin.n_steps = langevin_steps;
    c.use_ground_truth_velocity = use_ground_truth_velocity;
    c.seed = seed;
    c.log_every = log_every;
    c.carry = carry_mode_from_string(carry);
    return c;
  }

  MetricConfig metric_config() const {
    MetricConfig m;
    m.n_proj = n_proj;
    m.p = swd_p;
    m.seed = seed;
    m.with_w1 = with_w1;
    return m;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, dataset, data_paths, n_per_marginal, dim, times, leave_out,
                                                use_ground_truth_velocity, steps_per_segment, g, n_bi, inner_iters,
                                                cache_size, batch_size, lr, weight_decay, ema_decay, snr,
                                                langevin_steps, hidden_width, num_residual_blocks, time_embed_dim, seed,
                                                checkpoint_every, log_every, carry, output_dir, n_samples, n_proj, swd_p,
                                                with_w1, threads)

/// Parses a config object, rejecting unknown keys (typos would otherwise be
/// silently ignored).
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json known = RunConfig{};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    RunConfig c = j.get<RunConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace dmsb
