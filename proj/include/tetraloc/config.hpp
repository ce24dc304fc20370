#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tetraloc/constants.hpp"
#include "tetraloc/errors.hpp"
#include "tetraloc/estimator.hpp"
#include "tetraloc/experiments.hpp"
#include "tetraloc/geometry.hpp"
#include "tetraloc/rng.hpp"
#include "tetraloc/sim.hpp"

namespace tetraloc {

/// Flat key-value run configuration; every key has a default matching the
/// reference experiment grid. The schema is the single source of truth for
/// parsing, emission, and validation.
struct Config {
  // array
  std::string array_kind = "rta";
  double array_spacing = kDefaultSpacing;
  std::array<Eigen::Vector3d, 4> array_coords{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(),
                                              Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  bool array_has_coords = false;

  // noise
  double phase_sigma0 = 0.10;
  double phase_sigma_slope = 0.12;
  double range_sigma = 0.25;
  double clock_drift_ppm = 20.0;
  std::array<double, 6> bias_true{};
  std::array<double, 4> sfd_true{};
  bool quantize_timestamps = true;

  // estimator
  std::string estimator_mode = "paper";
  std::string estimator_matrix = "canonical";
  double reject_threshold_deg = 165.0;

  // grid
  GridSpec grid{};

  // protocol
  double init_ms = 4.0, frame_ms = 6.0, ranging_ms = 18.0, bearing_ms = 12.0, compute_ms = 6.0;
  double backoff_min_ms = 5.0, backoff_max_ms = 25.0, timeout_ms = 10.0, csma_jitter_ms = 6.0;

  // trajectory experiment
  double traj_duration_s = 60.0;
  double traj_rate_hz = 10.0;
  int traj_msg_len = 8;
  double traj_filter_cutoff_hz = 1.0;
  double traj_circle_radius_m = 1.0;
  double traj_circle_rate_rad_s = 0.2;
  double traj_curve_speed_m_s = 0.3;
  double traj_curve_curvature_1_m = 0.2;

  // throughput experiment
  int thr_agents = 2;
  int thr_msg_len = 120;
  double thr_duration_s = 60.0;

  // calibrate subcommand
  int calib_samples = 500;

  // dump-frames subcommand
  int dump_msg_len = 300;

  std::uint64_t seed = kDefaultSeed;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

inline int parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const long parsed = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(parsed);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'", line);
}

inline Eigen::Vector3d parse_vec3(const std::string& v, int line) {
  std::istringstream in(v);
  double x, y, z;
  if (!(in >> x >> y >> z)) throw ConfigError("expected 'x y z', got '" + v + "'", line);
  std::string rest;
  if (in >> rest) throw ConfigError("expected exactly 3 components, got '" + v + "'", line);
  return {x, y, z};
}

inline std::string format_vec3(const Eigen::Vector3d& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

}  // namespace detail

/// Applies one `section.key = value` assignment. Unknown keys are errors.
inline void apply_config_value(Config& cfg, const std::string& key, const std::string& value,
                               int line = 0) {
  using namespace detail;
  auto num = [&] { return parse_double(value, line); };
  auto integer = [&] { return parse_int(value, line); };

  if (key == "array.kind") {
    if (value != "rta" && value != "orthogonal" && value != "custom")
      throw ConfigError("array.kind must be rta|orthogonal|custom", line);
    cfg.array_kind = value;
  } else if (key == "array.spacing_m") {
    cfg.array_spacing = num();
  } else if (key == "array.a1" || key == "array.a2" || key == "array.a3" || key == "array.a4") {
    cfg.array_coords[static_cast<std::size_t>(key[7] - '1')] = parse_vec3(value, line);
    cfg.array_has_coords = true;
  } else if (key == "noise.phase_sigma0_rad") {
    cfg.phase_sigma0 = num();
  } else if (key == "noise.phase_sigma_slope_rad_per_rad") {
    cfg.phase_sigma_slope = num();
  } else if (key == "noise.range_sigma_m") {
    cfg.range_sigma = num();
  } else if (key == "noise.clock_drift_ppm") {
    cfg.clock_drift_ppm = num();
  } else if (key.rfind("noise.bias_pair_", 0) == 0) {
    const std::string suffix = key.substr(16);
    bool matched = false;
    for (std::size_t k = 0; k < kPairOrder.size(); ++k) {
      const auto [n, o] = kPairOrder[k];
      if (suffix == std::to_string(n) + std::to_string(o)) {
        cfg.bias_true[k] = num();
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unknown key '" + key + "'", line);
  } else if (key.rfind("noise.sfd_a", 0) == 0 && key.size() == 12) {
    const int idx = key[11] - '1';
    if (idx < 0 || idx > 3) throw ConfigError("unknown key '" + key + "'", line);
    cfg.sfd_true[static_cast<std::size_t>(idx)] = num();
  } else if (key == "noise.quantize_timestamps") {
    cfg.quantize_timestamps = parse_bool(value, line);
  } else if (key == "estimator.mode") {
    if (value != "paper" && value != "exact")
      throw ConfigError("estimator.mode must be paper|exact", line);
    cfg.estimator_mode = value;
  } else if (key == "estimator.matrix") {
    if (value != "canonical" && value != "paper")
      throw ConfigError("estimator.matrix must be canonical|paper", line);
    cfg.estimator_matrix = value;
  } else if (key == "estimator.reject_threshold_deg") {
    cfg.reject_threshold_deg = num();
  } else if (key == "grid.pan_min_deg") {
    cfg.grid.pan_min_deg = num();
  } else if (key == "grid.pan_max_deg") {
    cfg.grid.pan_max_deg = num();
  } else if (key == "grid.pan_step_deg") {
    cfg.grid.pan_step_deg = num();
  } else if (key == "grid.tilt_min_deg") {
    cfg.grid.tilt_min_deg = num();
  } else if (key == "grid.tilt_max_deg") {
    cfg.grid.tilt_max_deg = num();
  } else if (key == "grid.tilt_step_deg") {
    cfg.grid.tilt_step_deg = num();
  } else if (key == "grid.range_min_m") {
    cfg.grid.range_min_m = num();
  } else if (key == "grid.range_max_m") {
    cfg.grid.range_max_m = num();
  } else if (key == "grid.range_step_m") {
    cfg.grid.range_step_m = num();
  } else if (key == "grid.readings_per_cell") {
    cfg.grid.readings_per_cell = integer();
  } else if (key == "protocol.init_ms") {
    cfg.init_ms = num();
  } else if (key == "protocol.frame_ms") {
    cfg.frame_ms = num();
  } else if (key == "protocol.ranging_ms") {
    cfg.ranging_ms = num();
  } else if (key == "protocol.bearing_ms") {
    cfg.bearing_ms = num();
  } else if (key == "protocol.compute_ms") {
    cfg.compute_ms = num();
  } else if (key == "protocol.backoff_min_ms") {
    cfg.backoff_min_ms = num();
  } else if (key == "protocol.backoff_max_ms") {
    cfg.backoff_max_ms = num();
  } else if (key == "protocol.timeout_ms") {
    cfg.timeout_ms = num();
  } else if (key == "protocol.csma_jitter_ms") {
    cfg.csma_jitter_ms = num();
  } else if (key == "trajectory.duration_s") {
    cfg.traj_duration_s = num();
  } else if (key == "trajectory.rpp_rate_hz") {
    cfg.traj_rate_hz = num();
  } else if (key == "trajectory.msg_len") {
    cfg.traj_msg_len = integer();
  } else if (key == "trajectory.filter_cutoff_hz") {
    cfg.traj_filter_cutoff_hz = num();
  } else if (key == "trajectory.circle_radius_m") {
    cfg.traj_circle_radius_m = num();
  } else if (key == "trajectory.circle_rate_rad_s") {
    cfg.traj_circle_rate_rad_s = num();
  } else if (key == "trajectory.curve_speed_m_s") {
    cfg.traj_curve_speed_m_s = num();
  } else if (key == "trajectory.curve_curvature_1_m") {
    cfg.traj_curve_curvature_1_m = num();
  } else if (key == "throughput.agents") {
    cfg.thr_agents = integer();
  } else if (key == "throughput.msg_len") {
    cfg.thr_msg_len = integer();
  } else if (key == "throughput.duration_s") {
    cfg.thr_duration_s = num();
  } else if (key == "calibrate.samples") {
    cfg.calib_samples = integer();
  } else if (key == "dump.msg_len") {
    cfg.dump_msg_len = integer();
  } else if (key == "run.seed") {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("expected an unsigned integer, got '" + value + "'", line);
    }
  } else {
    throw ConfigError("unknown key '" + key + "'", line);
  }
}

/// Range/consistency checks that span multiple keys.
inline void validate_config(const Config& cfg) {
  if (!(cfg.array_spacing > 0.0)) throw ConfigError("array.spacing_m must be positive");
  if (cfg.array_kind == "custom" && !cfg.array_has_coords)
    throw ConfigError("array.kind=custom requires array.a1..array.a4");
  if (cfg.phase_sigma0 < 0 || cfg.phase_sigma_slope < 0 || cfg.range_sigma < 0 ||
      cfg.clock_drift_ppm < 0)
    throw ConfigError("noise sigmas must be non-negative");
  if (!(cfg.reject_threshold_deg > 0 && cfg.reject_threshold_deg <= 180))
    throw ConfigError("estimator.reject_threshold_deg must be in (0, 180]");
  try {
    cfg.grid.validate();
  } catch (const InvalidParameterError& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.backoff_min_ms > 0) || cfg.backoff_min_ms > cfg.backoff_max_ms)
    throw ConfigError("need 0 < protocol.backoff_min_ms <= protocol.backoff_max_ms");
  if (cfg.init_ms <= 0 || cfg.frame_ms <= 0 || cfg.ranging_ms <= 0 || cfg.bearing_ms <= 0 ||
      cfg.compute_ms <= 0 || cfg.timeout_ms <= 0 || cfg.csma_jitter_ms < 0)
    throw ConfigError("protocol phase durations must be positive");
  if (cfg.thr_agents < 2) throw ConfigError("throughput.agents must be at least 2");
  if (cfg.thr_msg_len < 0 || cfg.traj_msg_len < 0 || cfg.dump_msg_len < 0)
    throw ConfigError("message lengths must be non-negative");
  if (!(cfg.thr_duration_s > 0) || !(cfg.traj_duration_s > 0))
    throw ConfigError("experiment durations must be positive");
  if (!(cfg.traj_rate_hz > 0)) throw ConfigError("trajectory.rpp_rate_hz must be positive");
  if (!(cfg.traj_filter_cutoff_hz > 0))
    throw ConfigError("trajectory.filter_cutoff_hz must be positive");
  if (cfg.calib_samples < 2) throw ConfigError("calibrate.samples must be at least 2");
}

/// Parses flat `key = value` text; '#' starts a comment; blank lines ignored.
inline Config parse_config(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    apply_config_value(cfg, key, value, line_no);
  }
  validate_config(cfg);
  return cfg;
}

/// Canonical echo of a resolved configuration: every key, schema order.
/// parse_config(emit_config(cfg)) reproduces cfg.
inline std::string emit_config(const Config& cfg) {
  using detail::format_double;
  std::ostringstream out;
  out << "array.kind = " << cfg.array_kind << "\n";
  out << "array.spacing_m = " << format_double(cfg.array_spacing) << "\n";
  if (cfg.array_has_coords)
    for (int i = 0; i < 4; ++i)
      out << "array.a" << (i + 1) << " = " << detail::format_vec3(cfg.array_coords[i]) << "\n";
  out << "noise.phase_sigma0_rad = " << format_double(cfg.phase_sigma0) << "\n";
  out << "noise.phase_sigma_slope_rad_per_rad = " << format_double(cfg.phase_sigma_slope) << "\n";
  out << "noise.range_sigma_m = " << format_double(cfg.range_sigma) << "\n";
  out << "noise.clock_drift_ppm = " << format_double(cfg.clock_drift_ppm) << "\n";
  for (std::size_t k = 0; k < kPairOrder.size(); ++k) {
    const auto [n, o] = kPairOrder[k];
    out << "noise.bias_pair_" << n << o << " = " << format_double(cfg.bias_true[k]) << "\n";
  }
  for (int i = 0; i < 4; ++i)
    out << "noise.sfd_a" << (i + 1) << " = " << format_double(cfg.sfd_true[i]) << "\n";
  out << "noise.quantize_timestamps = " << (cfg.quantize_timestamps ? "true" : "false") << "\n";
  out << "estimator.mode = " << cfg.estimator_mode << "\n";
  out << "estimator.matrix = " << cfg.estimator_matrix << "\n";
  out << "estimator.reject_threshold_deg = " << format_double(cfg.reject_threshold_deg) << "\n";
  out << "grid.pan_min_deg = " << format_double(cfg.grid.pan_min_deg) << "\n";
  out << "grid.pan_max_deg = " << format_double(cfg.grid.pan_max_deg) << "\n";
  out << "grid.pan_step_deg = " << format_double(cfg.grid.pan_step_deg) << "\n";
  out << "grid.tilt_min_deg = " << format_double(cfg.grid.tilt_min_deg) << "\n";
  out << "grid.tilt_max_deg = " << format_double(cfg.grid.tilt_max_deg) << "\n";
  out << "grid.tilt_step_deg = " << format_double(cfg.grid.tilt_step_deg) << "\n";
  out << "grid.range_min_m = " << format_double(cfg.grid.range_min_m) << "\n";
  out << "grid.range_max_m = " << format_double(cfg.grid.range_max_m) << "\n";
  out << "grid.range_step_m = " << format_double(cfg.grid.range_step_m) << "\n";
  out << "grid.readings_per_cell = " << cfg.grid.readings_per_cell << "\n";
  out << "protocol.init_ms = " << format_double(cfg.init_ms) << "\n";
  out << "protocol.frame_ms = " << format_double(cfg.frame_ms) << "\n";
  out << "protocol.ranging_ms = " << format_double(cfg.ranging_ms) << "\n";
  out << "protocol.bearing_ms = " << format_double(cfg.bearing_ms) << "\n";
  out << "protocol.compute_ms = " << format_double(cfg.compute_ms) << "\n";
  out << "protocol.backoff_min_ms = " << format_double(cfg.backoff_min_ms) << "\n";
  out << "protocol.backoff_max_ms = " << format_double(cfg.backoff_max_ms) << "\n";
  out << "protocol.timeout_ms = " << format_double(cfg.timeout_ms) << "\n";
  out << "protocol.csma_jitter_ms = " << format_double(cfg.csma_jitter_ms) << "\n";
  out << "trajectory.duration_s = " << format_double(cfg.traj_duration_s) << "\n";
  out << "trajectory.rpp_rate_hz = " << format_double(cfg.traj_rate_hz) << "\n";
  out << "trajectory.msg_len = " << cfg.traj_msg_len << "\n";
  out << "trajectory.filter_cutoff_hz = " << format_double(cfg.traj_filter_cutoff_hz) << "\n";
  out << "trajectory.circle_radius_m = " << format_double(cfg.traj_circle_radius_m) << "\n";
  out << "trajectory.circle_rate_rad_s = " << format_double(cfg.traj_circle_rate_rad_s) << "\n";
  out << "trajectory.curve_speed_m_s = " << format_double(cfg.traj_curve_speed_m_s) << "\n";
  out << "trajectory.curve_curvature_1_m = " << format_double(cfg.traj_curve_curvature_1_m)
      << "\n";
  out << "throughput.agents = " << cfg.thr_agents << "\n";
  out << "throughput.msg_len = " << cfg.thr_msg_len << "\n";
  out << "throughput.duration_s = " << format_double(cfg.thr_duration_s) << "\n";
  out << "calibrate.samples = " << cfg.calib_samples << "\n";
  out << "dump.msg_len = " << cfg.dump_msg_len << "\n";
  out << "run.seed = " << cfg.seed << "\n";
  return out.str();
}

inline std::string config_hash(const Config& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(emit_config(cfg))));
  return buf;
}

// --- converters into the library's typed configs ---------------------------

inline AntennaArray array_from_config(const Config& cfg) {
  if (cfg.array_kind == "rta") return build_rta(cfg.array_spacing);
  if (cfg.array_kind == "orthogonal") return build_orthogonal(cfg.array_spacing);
  return build_custom(cfg.array_coords);
}

inline NoiseModel noise_from_config(const Config& cfg) {
  NoiseModel noise;
  noise.phase_sigma0 = cfg.phase_sigma0;
  noise.phase_sigma_slope = cfg.phase_sigma_slope;
  noise.range_sigma = cfg.range_sigma;
  noise.clock_drift_ppm = cfg.clock_drift_ppm;
  noise.bias_true = cfg.bias_true;
  noise.sfd_true = cfg.sfd_true;
  noise.quantize_timestamps = cfg.quantize_timestamps;
  noise.seed = cfg.seed;
  return noise;
}

inline EstimatorConfig estimator_from_config(const Config& cfg) {
  EstimatorConfig est;
  est.mode = cfg.estimator_mode == "exact" ? IncidenceMode::exact : IncidenceMode::paper;
  est.use_paper_matrix = cfg.estimator_matrix == "paper";
  est.reject_threshold = deg_to_rad(cfg.reject_threshold_deg);
  return est;
}

inline NodeConfig node_from_config(const Config& cfg) {
  NodeConfig node;
  node.durations.init_us = static_cast<std::int64_t>(std::llround(cfg.init_ms * 1000));
  node.durations.per_frame_us = static_cast<std::int64_t>(std::llround(cfg.frame_ms * 1000));
  node.durations.ranging_us = static_cast<std::int64_t>(std::llround(cfg.ranging_ms * 1000));
  node.durations.bearing_us = static_cast<std::int64_t>(std::llround(cfg.bearing_ms * 1000));
  node.durations.compute_us = static_cast<std::int64_t>(std::llround(cfg.compute_ms * 1000));
  node.backoff_min_us = static_cast<std::int64_t>(std::llround(cfg.backoff_min_ms * 1000));
  node.backoff_max_us = static_cast<std::int64_t>(std::llround(cfg.backoff_max_ms * 1000));
  node.timeout_us = static_cast<std::int64_t>(std::llround(cfg.timeout_ms * 1000));
  return node;
}

inline SimConfig sim_from_config(const Config& cfg) {
  SimConfig sim;
  sim.array = array_from_config(cfg);
  sim.noise = noise_from_config(cfg);
  sim.estimator = estimator_from_config(cfg);
  sim.node = node_from_config(cfg);
  sim.seed = cfg.seed;
  sim.csma_jitter_us = static_cast<std::int64_t>(std::llround(cfg.csma_jitter_ms * 1000));
  return sim;
}

inline ExperimentConfig experiment_from_config(const Config& cfg) {
  ExperimentConfig exp;
  exp.grid = cfg.grid;
  exp.noise = noise_from_config(cfg);
  exp.estimator = estimator_from_config(cfg);
  exp.array_kind = cfg.array_kind == "rta"
                       ? ArrayKind::rta
                       : (cfg.array_kind == "orthogonal" ? ArrayKind::orthogonal : ArrayKind::custom);
  exp.spacing = cfg.array_spacing;
  exp.seed = cfg.seed;
  if (exp.array_kind == ArrayKind::custom) exp.custom_array = array_from_config(cfg);
  return exp;
}

}  // namespace tetraloc
