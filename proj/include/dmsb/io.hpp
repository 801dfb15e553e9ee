#pragma once

// File formats: policy checkpoints (JSON), checkpoint directories, trajectory
// dumps (CSV or packed f32 little-endian + JSON sidecar), metric reports,
// dataset manifests and the line-delimited training log.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsb/bregman.hpp"
#include "dmsb/data.hpp"
#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/metrics.hpp"
#include "dmsb/nnet.hpp"

namespace dmsb::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Configs

inline json to_json(const ArchConfig& a) {
  return {{"state_dim", a.state_dim},
          {"hidden_width", a.hidden_width},
          {"num_residual_blocks", a.num_residual_blocks},
          {"time_embed_dim", a.time_embed_dim},
          {"activation", "silu"},
          {"param_init_seed", a.param_init_seed}};
}

inline ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  a.state_dim = j.at("state_dim").get<int>();
  a.hidden_width = j.at("hidden_width").get<int>();
  a.num_residual_blocks = j.at("num_residual_blocks").get<int>();
  a.time_embed_dim = j.at("time_embed_dim").get<int>();
  if (j.value("activation", "silu") != "silu") throw ParseError("unsupported activation");
  a.param_init_seed = j.value("param_init_seed", std::uint64_t{0});
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// Policy checkpoints

inline json to_json(const Net& net, const std::string& rng_label = {}) {
  const auto& opt = net.opt_state();
  return {{"format", "dmsb-checkpoint"},
          {"version", kCheckpointVersion},
          {"arch", to_json(net.arch())},
          {"direction", to_string(net.direction())},
          {"ema_decay", net.ema_decay()},
          {"params", std::vector<float>(net.params().begin(), net.params().end())},
          {"ema_params", std::vector<float>(net.ema_params().begin(), net.ema_params().end())},
          {"first_moment", opt.first_moment},
          {"second_moment", opt.second_moment},
          {"step", opt.step},
          {"rng_label", rng_label}};
}

inline Net net_from_json(const json& j) {
  if (j.value("format", "") != "dmsb-checkpoint") throw ParseError("not a policy checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + j.at("version").dump());
  const std::string dir = j.at("direction").get<std::string>();
  if (dir != "forward" && dir != "backward") throw ParseError("bad direction '" + dir + "'");
  Net net(arch_from_json(j.at("arch")), dir == "forward" ? Direction::forward : Direction::backward,
          j.at("ema_decay").get<double>());
  auto fill = [&](const char* key, std::span<float> dst) {
    const auto v = j.at(key).get<std::vector<float>>();
    if (v.size() != dst.size())
      throw ParseError(std::string(key) + ": expected " + std::to_string(dst.size()) + " values, got " +
                       std::to_string(v.size()));
    std::copy(v.begin(), v.end(), dst.begin());
  };
  fill("params", net.mutable_params());
  fill("ema_params", net.mutable_ema_params());
  auto& opt = net.mutable_opt_state();
  fill("first_moment", opt.first_moment);
  fill("second_moment", opt.second_moment);
  opt.step = j.at("step").get<decltype(opt.step)>();
  return net;
}

inline void save_checkpoint(const Net& net, const fs::path& path, const std::string& rng_label = {}) {
  write_json(path, to_json(net, rng_label));
}

inline Net load_checkpoint(const fs::path& path) {
  try {
    return net_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trajectory dumps

inline json sidecar(const Cache& c) {
  return {{"format", "dmsb-trajectory"},
          {"dtype", "f32le"},
          {"layout", "sample,step,[x_0..x_{d-1},v_0..v_{d-1}]"},
          {"batch", c.batch},
          {"steps", c.steps()},
          {"dim", c.dim},
          {"first_marginal", c.first_marginal},
          {"last_marginal", c.last_marginal},
          {"steps_per_segment", c.steps_per_segment},
          {"direction", to_string(c.direction)},
          {"producer", c.producer},
          {"times", c.times}};
}

/// Writes `<path>` (raw floats) and `<path>.json` (shape sidecar).
inline void save_trajectory_binary(const Cache& c, const fs::path& path) {
  static_assert(sizeof(float) == 4);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (float f : c.states) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    char b[4];
    std::memcpy(b, &u, 4);
    out.write(b, 4);
  }
  write_json(fs::path(path.string() + ".json"), sidecar(c));
}

inline Cache load_trajectory_binary(const fs::path& path) {
  const json meta = read_json(fs::path(path.string() + ".json"));
  if (meta.value("format", "") != "dmsb-trajectory" || meta.value("dtype", "") != "f32le")
    throw ParseError(path.string() + ".json: not an f32le trajectory sidecar");
  Cache c;
  c.batch = meta.at("batch").get<Eigen::Index>();
  c.dim = meta.at("dim").get<int>();
  c.first_marginal = meta.at("first_marginal").get<int>();
  c.last_marginal = meta.at("last_marginal").get<int>();
  c.steps_per_segment = meta.at("steps_per_segment").get<int>();
  c.direction = meta.at("direction").get<std::string>() == "backward" ? Direction::backward : Direction::forward;
  c.producer = meta.value("producer", "");
  c.times = meta.at("times").get<std::vector<double>>();
  if (static_cast<int>(c.times.size()) != meta.at("steps").get<int>() + 1)
    throw ParseError(path.string() + ".json: times length does not match steps");
  const std::size_t n = static_cast<std::size_t>(c.batch) * c.times.size() * 2 * c.dim;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  c.states.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    char b[4];
    if (!in.read(b, 4)) throw ParseError(path.string() + ": truncated after " + std::to_string(i) + " values");
    std::uint32_t u;
    std::memcpy(&u, b, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    c.states[i] = std::bit_cast<float>(u);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing data");
  return c;
}

/// CSV dump: sample_id, step, time, x_*, v_*. Steps are local to the cached span.
inline void save_trajectory_csv(const Cache& c, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << std::setprecision(9) << "sample_id,step,time";
  for (int j = 0; j < c.dim; ++j) out << ",x_" << j;
  for (int j = 0; j < c.dim; ++j) out << ",v_" << j;
  out << '\n';
  for (Eigen::Index b = 0; b < c.batch; ++b)
    for (int k = 0; k <= c.steps(); ++k) {
      out << b << ',' << k << ',' << std::setprecision(17) << c.times[k] << std::setprecision(9);
      for (float f : c.state(b, k)) out << ',' << f;
      out << '\n';
    }
}

/// Reads a CSV dump; marginal bookkeeping comes from the caller's time grid.
inline Cache load_trajectory_csv(const fs::path& path, const TimeGrid& grid) {
  const auto table = detail::read_table(path);
  const auto& h = table.header;
  if (h.size() < 5 || (h.size() - 3) % 2 != 0 || h[0] != "sample_id" || h[1] != "step" || h[2] != "time")
    throw ParseError(path.string() + ": expected header sample_id,step,time,x_*,v_*");
  const int dim = static_cast<int>(h.size() - 3) / 2;
  Eigen::Index batch = 0;
  int steps = 0;
  for (const auto& r : table.rows) {
    batch = std::max<Eigen::Index>(batch, static_cast<Eigen::Index>(r[0]) + 1);
    steps = std::max(steps, static_cast<int>(r[1]));
  }
  if (steps != grid.total_steps())
    throw DimensionError(path.string() + ": " + std::to_string(steps) + " steps, grid has " +
                         std::to_string(grid.total_steps()));
  Cache c(Direction::forward, 0, grid.segments(), grid, batch, dim);
  if (table.rows.size() != static_cast<std::size_t>(batch) * c.times.size())
    throw ParseError(path.string() + ": row count does not match sample_id x step");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const int k = static_cast<int>(r[1]);
    if (std::abs(r[2] - c.times[k]) > 1e-6 * std::max(1.0, std::abs(c.times[k])))
      throw DimensionError(path.string() + ": line " + std::to_string(i + 2) + ": time " + std::to_string(r[2]) +
                           " does not match grid time " + std::to_string(c.times[k]));
    auto s = c.state(static_cast<Eigen::Index>(r[0]), k);
    for (int j = 0; j < 2 * dim; ++j) s[j] = static_cast<float>(r[3 + j]);
  }
  c.producer = "csv";
  return c;
}

// ---------------------------------------------------------------------------
// Training state directories: theta.ckpt, phi.ckpt, state.json [, carried.f32]

inline void save_state(const TrainState& s, const fs::path& dir, const json& config = json::object()) {
  fs::create_directories(dir);
  const std::string label = "train/bi=" + std::to_string(s.bi);
  save_checkpoint(s.theta, dir / "theta.ckpt", label);
  save_checkpoint(s.phi, dir / "phi.ckpt", label);
  json st = {{"format", "dmsb-state"}, {"version", kCheckpointVersion}, {"bi", s.bi},
             {"has_carried", s.carried.has_value()}, {"config", config}};
  if (s.carried) save_trajectory_binary(*s.carried, dir / "carried.f32");
  write_json(dir / "state.json", st);
}

inline TrainState load_state(const fs::path& dir) {
  const json st = read_json(dir / "state.json");
  if (st.value("format", "") != "dmsb-state") throw ParseError((dir / "state.json").string() + ": not a state file");
  TrainState s{load_checkpoint(dir / "theta.ckpt"), load_checkpoint(dir / "phi.ckpt"), {}, st.at("bi").get<int>()};
  if (s.theta.direction() != Direction::forward || s.phi.direction() != Direction::backward)
    throw ParseError(dir.string() + ": checkpoint directions are swapped");
  if (st.at("has_carried").get<bool>()) s.carried = load_trajectory_binary(dir / "carried.f32");
  return s;
}

// ---------------------------------------------------------------------------
// Logs, reports, manifests

inline json to_json(const StepRecord& r) {
  return {{"bi", r.bi},
          {"bp_index", r.bp_index},
          {"task_kind", to_string(r.task.kind)},
          {"span", {r.task.span.first, r.task.span.second}},
          {"policy", to_string(r.task.opt)},
          {"step", r.step},
          {"loss", r.loss}};
}

inline json to_json(const MetricRow& r) {
  json j = {{"index", r.index}, {"time", r.time}, {"left_out", r.left_out}, {"swd", r.swd}, {"mmd", r.mmd},
            {"energy", r.energy}, {"mswd", r.mswd}, {"n_generated", r.n_generated}, {"n_reference", r.n_reference}};
  j["w1"] = r.w1 ? json(*r.w1) : json(nullptr);
  return j;
}

inline json to_json(const MetricReport& rep) {
  auto rows = [](const std::vector<MetricRow>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back(to_json(r));
    return a;
  };
  auto avg = [](const std::vector<MetricRow>& v) {
    const auto a = MetricReport::average(v);
    return json{{"swd", a.swd}, {"mmd", a.mmd}, {"energy", a.energy}, {"mswd", a.mswd}};
  };
  json j = {{"config",
             {{"n_proj", rep.config.n_proj},
              {"p", rep.config.p},
              {"seed", rep.config.seed},
              {"mmd_multipliers", rep.config.mmd_multipliers},
              {"with_w1", rep.config.with_w1},
              {"with_velocities", rep.config.with_velocities}}},
            {"positions", rows(rep.positions)},
            {"positions_average", avg(rep.positions)}};
  if (!rep.velocities.empty()) {
    j["velocities"] = rows(rep.velocities);
    j["velocities_average"] = avg(rep.velocities);
  }
  return j;
}

/// One row per (quantity, marginal) plus an average row, LO rows marked.
inline void save_report_csv(const MetricReport& rep, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << std::setprecision(9) << "quantity,marginal,time,left_out,swd,mmd,energy,mswd,w1\n";
  auto emit = [&](const char* q, const std::vector<MetricRow>& rows) {
    for (const auto& r : rows) {
      out << q << ',' << r.index << ',' << r.time << ',' << (r.left_out ? "LO" : "") << ',' << r.swd << ',' << r.mmd
          << ',' << r.energy << ',' << r.mswd << ',';
      if (r.w1) out << *r.w1;
      out << '\n';
    }
    if (rows.empty()) return;
    const auto a = MetricReport::average(rows);
    out << q << ",avg,,," << a.swd << ',' << a.mmd << ',' << a.energy << ',' << a.mswd << ",\n";
  };
  emit("position", rep.positions);
  emit("velocity", rep.velocities);
}

/// Generated states at each marginal time, for scatter plots.
inline std::size_t save_plot_data(const Cache& traj, int n_marginals, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << std::setprecision(9) << "marginal,time,sample_id";
  for (int j = 0; j < traj.dim; ++j) out << ",x_" << j;
  for (int j = 0; j < traj.dim; ++j) out << ",v_" << j;
  out << '\n';
  std::size_t rows = 0;
  for (int i = 0; i < n_marginals; ++i) {
    const int k = traj.marginal_index(i);
    for (Eigen::Index b = 0; b < traj.batch; ++b, ++rows) {
      out << i << ',' << traj.times[k] << ',' << b;
      for (float f : traj.state(b, k)) out << ',' << f;
      out << '\n';
    }
  }
  return rows;
}

inline json manifest(const std::string& name, const MarginalSet& set, std::uint64_t seed,
                     const std::vector<fs::path>& files = {}) {
  std::vector<Eigen::Index> counts;
  for (const auto& m : set.marginals) counts.push_back(m.size());
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  return {{"name", name}, {"dim", set.dim}, {"times", set.times()}, {"counts", counts}, {"seed", seed},
          {"files", names}};
}

}  // namespace dmsb::io
