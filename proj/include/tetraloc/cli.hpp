#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tetraloc/calibration_io.hpp"
#include "tetraloc/config.hpp"
#include "tetraloc/report.hpp"

namespace tetraloc {

namespace cli_detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void apply_overrides(Config& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  validate_config(cfg);
}

/// The reference 3-agent scene: agent 1 orbits, agent 2 drives a curved
/// forward arc, agent 3 observes from the origin.
inline std::vector<Agent> trajectory_agents(const Config& cfg) {
  Agent a1;
  a1.id = 1;
  a1.trajectory.kind = Trajectory::Kind::circular;
  a1.trajectory.center = {0.0, 0.0, 2.0};
  a1.trajectory.radius = cfg.traj_circle_radius_m;
  a1.trajectory.angular_rate = cfg.traj_circle_rate_rad_s;
  Agent a2;
  a2.id = 2;
  a2.trajectory.kind = Trajectory::Kind::curved_forward;
  a2.trajectory.start = {2.0, 0.0, -1.0};
  a2.trajectory.heading = deg_to_rad(120.0);
  a2.trajectory.curvature = cfg.traj_curve_curvature_1_m;
  a2.trajectory.speed = cfg.traj_curve_speed_m_s;
  Agent a3;
  a3.id = 3;
  return {a1, a2, a3};
}

}  // namespace cli_detail

/// Runs one CLI invocation; every subcommand is a thin shell over the library
/// calls above. Returns the process exit code: 0 ok, 1 config error,
/// 2 runtime error.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"UWB phase-difference relative localization simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  int jobs = 1;
  std::vector<std::string> overrides;
  bool dump_frames = false;

  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed_flag, "master seed (overrides run.seed)");
  app.add_option("--jobs", jobs, "parallel workers for grid experiments")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "override one config key, key=value (repeatable)");
  app.add_flag("--dump-frames", dump_frames, "write hex frame traces for protocol runs");

  auto* cmd_calibrate = app.add_subcommand("calibrate", "estimate per-pair phase biases");
  auto* cmd_covmap = app.add_subcommand("covmap", "covariance-map grid experiment");
  auto* cmd_trajectory = app.add_subcommand("trajectory", "3-agent localization experiment");
  auto* cmd_throughput = app.add_subcommand("throughput", "saturated channel throughput");
  auto* cmd_dump = app.add_subcommand("dump-frames", "emit the frame trace of one transaction");

  std::vector<const char*> argv;
  argv.push_back("tetraloc");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
    return 1;
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg = parse_config(cli_detail::read_file(config_path));
    cli_detail::apply_overrides(cfg, overrides);
    if (seed_opt->count() > 0) {
      cfg.seed = seed_flag;
      seed_set = true;
    }
    (void)seed_set;

    std::filesystem::create_directories(out_dir);
    auto out_path = [&](const std::string& name) { return out_dir + "/" + name; };
    std::vector<std::string> outputs;
    nlohmann::json summary;

    if (cmd_covmap->parsed()) {
      const ExperimentConfig exp = experiment_from_config(cfg);
      const auto cells = run_covariance_experiment(exp, jobs);
      write_text_file(out_path("covmap.csv"), covmap_csv(cells));
      outputs.push_back("covmap.csv");
      const CovmapSummary s = summarize_covmap(cells);
      summary["cells"] = cells.size();
      summary["operational_mean_bearing_err_deg"] = s.operational_mean_bearing_err_deg;
      summary["operational_range_rmse_m"] = s.operational_range_rmse_m;
      summary["operational_cells"] = s.operational_cells;
      summary["total_failures"] = s.total_failures;
    } else if (cmd_trajectory->parsed()) {
      SimConfig sim = sim_from_config(cfg);
      sim.record_frames = dump_frames;
      const auto agents = cli_detail::trajectory_agents(cfg);
      const TrajectoryResult r = run_trajectory_experiment(
          agents, 3, cfg.traj_duration_s, cfg.traj_rate_hz, sim,
          static_cast<std::size_t>(cfg.traj_msg_len));
      write_text_file(out_path("trajectory.csv"),
                      trajectory_csv(r.pings, cfg.traj_filter_cutoff_hz));
      outputs.push_back("trajectory.csv");
      if (dump_frames) {
        std::string trace;
        for (const std::string& hex : r.frames) trace += hex + "\n";
        write_text_file(out_path("frames.hex"), trace);
        outputs.push_back("frames.hex");
      }
      long ok = 0;
      for (const PingRecord& p : r.pings) ok += p.ok ? 1 : 0;
      summary["pings"] = r.pings.size();
      summary["pings_ok"] = ok;
      summary["transactions"] = r.transactions.size();
      summary["dropped_requests"] = r.dropped_requests;
    } else if (cmd_throughput->parsed()) {
      SimConfig sim = sim_from_config(cfg);
      sim.record_frames = dump_frames;
      const ThroughputResult r = measure_throughput(cfg.thr_agents,
                                                    static_cast<std::size_t>(cfg.thr_msg_len),
                                                    cfg.thr_duration_s, sim);
      const nlohmann::json j =
          throughput_json(r, cfg.thr_agents, cfg.thr_msg_len, cfg.thr_duration_s);
      write_text_file(out_path("throughput.json"), j.dump(2) + "\n");
      outputs.push_back("throughput.json");
      summary = j;
    } else if (cmd_calibrate->parsed()) {
      const AntennaArray array = array_from_config(cfg);
      const NoiseModel noise = noise_from_config(cfg);
      Rng rng(substream_seed(cfg.seed, "calibrate"));
      std::vector<CalibrationSample> samples;
      samples.reserve(static_cast<std::size_t>(cfg.calib_samples));
      for (int i = 0; i < cfg.calib_samples; ++i) {
        Eigen::Vector3d dir;
        do {
          dir = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
        } while (dir.norm() < 1e-9);
        dir.normalize();
        TruePose pose;
        pose.p_i = 2.0 * dir;
        const RppObservation obs = synth_observation(array, pose, noise, rng);
        samples.push_back({dir, obs.pair_diffs});
      }
      const CalibrationTable table = calibrate_bias(samples, array);
      write_text_file(out_path("calibration.txt"), calibration_to_text(table));
      outputs.push_back("calibration.txt");
      summary["residual_rms_rad"] = table.residual_rms;
      for (std::size_t k = 0; k < kPairOrder.size(); ++k)
        summary["pair_biases_rad"][pair_key(k)] = table.pair_biases[k];
    } else if (cmd_dump->parsed()) {
      SimConfig sim = sim_from_config(cfg);
      sim.record_frames = true;
      Agent a1;
      a1.id = 1;
      a1.trajectory.start = {2.0, 0.0, 0.0};
      Agent a2;
      a2.id = 2;
      SimWorld world({a1, a2}, sim);
      std::vector<std::uint8_t> payload(static_cast<std::size_t>(cfg.dump_msg_len));
      for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<std::uint8_t>(i & 0xFF);
      world.submit(1, 2, payload, 0);
      world.run_until(10'000'000);
      std::string trace;
      for (const std::string& hex : world.frame_trace()) trace += hex + "\n";
      write_text_file(out_path("frames.hex"), trace);
      outputs.push_back("frames.hex");
      summary["frames"] = world.frame_trace().size();
      summary["transactions"] = world.transactions().size();
    }

    nlohmann::json manifest = make_manifest(app.get_subcommands().front()->get_name(), cfg, outputs);
    manifest["summary"] = summary;
    write_text_file(out_path("manifest.json"), manifest.dump(2) + "\n");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
    return 1;
  } catch (const InvalidParameterError& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"kind", "runtime"}}.dump() << "\n";
    return 2;
  }
}

}  // namespace tetraloc
