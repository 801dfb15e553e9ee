// dmsb: gen-data | train | sample | eval
//
// Every command reads an optional JSON config (--config) and accepts each
// config key as a flag of the same name; flags win over the file. The
// effective config is echoed to stderr and written next to the outputs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmsb/config.hpp"
#include "dmsb/dmsb.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dmsb;

namespace {

struct Overrides {
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> lists;
};

/// Registers one flag per config key, typed after the key's default value.
void add_config_flags(CLI::App& app, Overrides& ov, std::string& config_path) {
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  const json defaults = RunConfig{};
  for (const auto& [key, value] : defaults.items()) {
    const std::string flag = "--" + key;
    if (value.is_array())
      app.add_option(flag, ov.lists[key])->delimiter(',')->expected(0, -1);
    else if (value.is_boolean())
      app.add_option(flag, ov.scalars[key])->expected(0, 1)->default_str("true")->force_callback(false);
    else
      app.add_option(flag, ov.scalars[key]);
  }
}

json parse_scalar(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text.empty() || text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("");
    }
    std::size_t used = 0;
    json out;
    if (like.is_number_unsigned()) out = std::stoull(text, &used);
    else if (like.is_number_integer()) out = std::stoll(text, &used);
    else if (like.is_number_float()) out = std::stod(text, &used);
    else return text;
    if (used != text.size()) throw ConfigError("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("--" + key + ": cannot parse '" + text + "'");
  }
}

RunConfig resolve_config(const CLI::App& app, const Overrides& ov, const std::string& config_path) {
  json j = RunConfig{};
  if (!config_path.empty()) j.update(io::read_json(config_path));
  const json defaults = RunConfig{};
  for (const auto& [key, text] : ov.scalars)
    if (app.count("--" + key) > 0) j[key] = parse_scalar(key, text, defaults[key]);
  for (const auto& [key, items] : ov.lists) {
    if (app.count("--" + key) == 0) continue;
    json arr = json::array();
    for (const auto& s : items) arr.push_back(key == "times" ? json(parse_scalar(key, s, 0.0)) : json(s));
    j[key] = arr;
  }
  return run_config_from_json(j);
}

void echo_config(const RunConfig& cfg, const std::string& command) {
  const json j = cfg;
  std::cerr << "[" << command << "] effective config: " << j.dump() << "\n";
  fs::create_directories(cfg.output_dir);
  io::write_json(fs::path(cfg.output_dir) / (command + ".config.json"), j);
}

MarginalSet load_dataset(const RunConfig& cfg) {
  MarginalSet set;
  if (cfg.dataset == "csv") {
    if (cfg.data_paths.size() == 1 && fs::path(cfg.data_paths[0]).extension() == ".json") {
      // manifest written by gen-data
      const fs::path mpath = cfg.data_paths[0];
      const json m = io::read_json(mpath);
      std::vector<fs::path> files;
      for (const auto& f : m.at("files")) files.push_back(mpath.parent_path() / f.get<std::string>());
      set = load_csv(files, cfg.times.empty() ? m.at("times").get<std::vector<double>>() : cfg.times);
    } else if (cfg.data_paths.size() == 1) {
      set = load_csv(fs::path(cfg.data_paths[0]), cfg.times);
    } else {
      std::vector<fs::path> files(cfg.data_paths.begin(), cfg.data_paths.end());
      set = load_csv(files, cfg.times);
    }
  } else {
    set = generate_dataset(cfg.dataset, cfg.n_per_marginal, cfg.seed);
    if (!cfg.times.empty()) {
      if (static_cast<int>(cfg.times.size()) != set.count())
        throw ConfigError("times has " + std::to_string(cfg.times.size()) + " entries, dataset has " +
                          std::to_string(set.count()) + " marginals");
      for (int i = 0; i < set.count(); ++i) set.marginals[i].time = cfg.times[i];
    }
  }
  if (cfg.dim != 0 && cfg.dim != set.dim)
    throw DimensionError("config dim " + std::to_string(cfg.dim) + " but data has dim " + std::to_string(set.dim));
  if (cfg.leave_out >= 0) set = leave_out(std::move(set), cfg.leave_out);
  set.validate();
  return set;
}

fs::path default_checkpoint(const RunConfig& cfg) { return fs::path(cfg.output_dir) / "checkpoint"; }

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
  const MarginalSet set = generate_dataset(cfg.dataset, cfg.n_per_marginal, cfg.seed);
  const fs::path dir = cfg.output_dir;
  const auto files = save_csv_per_marginal(set, dir, cfg.dataset);
  io::write_json(dir / "manifest.json", io::manifest(cfg.dataset, set, cfg.seed, files));
  std::cerr << "wrote " << files.size() << " marginals and manifest.json to " << dir << "\n";
  return 0;
}

/// Keeps the log lines of iterations before `bi` (resume truncates the rest).
void truncate_log(const fs::path& path, int bi) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && json::parse(line).at("bi").get<int>() < bi) keep.push_back(line);
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

int cmd_train(const RunConfig& cfg, const std::string& resume) {
  const MarginalSet data = load_dataset(cfg);
  const TrainConfig tc = cfg.train_config(data.dim);
  tc.validate();
  const fs::path out = cfg.output_dir;
  const fs::path log_path = out / "train_log.jsonl";

  TrainState state = resume.empty() ? init_state(tc, data.dim) : io::load_state(resume);
  if (state.theta.arch() != [&] { auto a = tc.arch; a.state_dim = data.dim; return a; }())
    throw ConfigError("checkpoint architecture differs from the configured one");
  if (resume.empty()) fs::remove(log_path);
  else truncate_log(log_path, state.bi);
  std::ofstream log(log_path, std::ios::app);

  const auto t0 = std::chrono::steady_clock::now();
  TrainObserver obs;
  obs.on_step = [&](const StepRecord& r) { log << io::to_json(r).dump() << '\n'; };
  obs.on_bp = [&](const BpSummary& s) {
    if (s.flagged)
      std::cerr << "warning: bi " << s.bi << " bp " << s.bp_index << " loss rose " << s.initial_loss << " -> "
                << s.final_loss << "\n";
  };
  obs.on_iteration = [&](const TrainState& s) {
    log.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "bi " << s.bi << "/" << tc.n_bi << "  " << secs << " s\n";
    if (s.bi % cfg.checkpoint_every == 0 || s.bi == tc.n_bi) io::save_state(s, default_checkpoint(cfg), json(cfg));
  };
  train(state, data, tc, obs);
  io::save_state(state, default_checkpoint(cfg), json(cfg));
  std::cerr << "checkpoint: " << default_checkpoint(cfg) << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& ckpt, const std::string& format, bool raw) {
  const MarginalSet data = load_dataset(cfg);
  const TrainState state = io::load_state(ckpt.empty() ? default_checkpoint(cfg) : fs::path(ckpt));
  const TrainConfig tc = cfg.train_config(data.dim);
  const Cache traj = sample(state, data, tc, cfg.n_samples, Rng(cfg.seed).split("sample"), !raw);
  const fs::path out = cfg.output_dir;
  if (format == "csv") {
    io::save_trajectory_csv(traj, out / "trajectory.csv");
    std::cerr << "wrote " << out / "trajectory.csv" << "\n";
  } else {
    io::save_trajectory_binary(traj, out / "trajectory.f32");
    std::cerr << "wrote " << out / "trajectory.f32" << " (+ .json sidecar)\n";
  }
  return 0;
}

/// Treats a dataset CSV as a degenerate trajectory holding only marginal slices.
Cache cache_from_dataset(const MarginalSet& gen, const MarginalSet& ref) {
  if (gen.count() != ref.count()) throw DimensionError("generated and reference marginal counts differ");
  Eigen::Index n = gen.marginals[0].size();
  for (const auto& m : gen.marginals)
    if (m.size() != n) throw DimensionError("generated marginals must have equal sample counts");
  TimeGrid grid{ref.times(), 1, 1.0};
  Cache c(Direction::forward, 0, ref.segments(), grid, n, gen.dim);
  for (int i = 0; i < gen.count(); ++i) {
    Batch b(n, gen.dim);
    b.x() = gen.marginals[i].positions.cast<float>();
    if (gen.marginals[i].velocities) b.v() = gen.marginals[i].velocities->cast<float>();
    else b.v().setZero();
    c.set_slice(i, b);
  }
  return c;
}

int cmd_eval(const RunConfig& cfg, const std::string& traj_path, const std::string& generated, bool positions_only,
             bool with_velocities) {
  if (positions_only && with_velocities) throw ConfigError("--positions-only and --with-velocities are exclusive");
  const MarginalSet ref = load_dataset(cfg);
  Cache traj;
  if (!generated.empty()) {
    traj = cache_from_dataset(load_csv(fs::path(generated), ref.times()), ref);
  } else {
    const fs::path p = traj_path.empty() ? fs::path(cfg.output_dir) / "trajectory.f32" : fs::path(traj_path);
    if (p.extension() == ".csv") {
      const TrainConfig tc = cfg.train_config(ref.dim);
      traj = io::load_trajectory_csv(p, tc.grid(ref.times()));
    } else {
      traj = io::load_trajectory_binary(p);
    }
  }
  MetricConfig mc = cfg.metric_config();
  mc.with_velocities = !positions_only;
  if (with_velocities && !ref.has_velocities()) throw ConfigError("--with-velocities needs reference velocities");
  const MetricReport rep = evaluate(traj, ref, mc);
  const fs::path out = cfg.output_dir;
  io::write_json(out / "report.json", io::to_json(rep));
  io::save_report_csv(rep, out / "report.csv");
  const auto rows = io::save_plot_data(traj, ref.count(), out / "plot_data.csv");
  for (const auto& r : rep.positions)
    std::fprintf(stderr, "t=%-8g %s swd %.4f  mmd %.4f  energy %.4f  mswd %.4f\n", r.time, r.left_out ? "LO" : "  ",
                 r.swd, r.mmd, r.energy, r.mswd);
  const auto avg = MetricReport::average(rep.positions);
  std::fprintf(stderr, "average     swd %.4f  mmd %.4f  energy %.4f  mswd %.4f\n", avg.swd, avg.mmd, avg.energy,
               avg.mswd);
  std::cerr << "wrote report.json, report.csv, plot_data.csv (" << rows << " rows) to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Momentum multi-marginal Schroedinger bridge: data, training, sampling, evaluation"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    Overrides ov;
    std::string config;
  };
  std::map<std::string, Sub> subs;
  auto add = [&](const std::string& name, const std::string& help) -> Sub& {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, help);
    add_config_flags(*s.app, s.ov, s.config);
    return s;
  };
  add("gen-data", "write a builtin dataset as per-marginal CSV files plus manifest.json");
  Sub& tr = add("train", "run Bregman iterations and write checkpoints + train_log.jsonl");
  Sub& sa = add("sample", "push data at t_0 through the learned forward policy");
  Sub& ev = add("eval", "score a trajectory against the data: report.json, report.csv, plot_data.csv");

  std::string resume, ckpt, format = "bin", traj, generated;
  bool raw = false, positions_only = false, with_velocities = false;
  tr.app->add_option("--resume", resume, "checkpoint directory to continue from")->check(CLI::ExistingDirectory);
  sa.app->add_option("--checkpoint", ckpt, "checkpoint directory (default <output_dir>/checkpoint)");
  sa.app->add_option("--format", format, "trajectory format")->check(CLI::IsMember({"bin", "csv"}));
  sa.app->add_flag("--raw", raw, "use raw instead of EMA parameters");
  ev.app->add_option("--trajectory", traj, "trajectory dump (.f32 with sidecar, or .csv)");
  ev.app->add_option("--generated-data", generated, "score a dataset CSV (index column) instead of a trajectory");
  ev.app->add_flag("--positions-only", positions_only, "skip velocity metrics");
  ev.app->add_flag("--with-velocities", with_velocities, "require velocity metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      const RunConfig cfg = resolve_config(*s.app, s.ov, s.config);
      // The library is single-threaded and deterministic; --threads only caps Eigen.
      Eigen::setNbThreads(cfg.threads);
      echo_config(cfg, name);
      if (name == "gen-data") return cmd_gen_data(cfg);
      if (name == "train") return cmd_train(cfg, resume);
      if (name == "sample") return cmd_sample(cfg, ckpt, format, raw);
      if (name == "eval") return cmd_eval(cfg, traj, generated, positions_only, with_velocities);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
