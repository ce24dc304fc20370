#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <optional>
#include <cmath>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tetraloc/channel.hpp"
#include "tetraloc/estimator.hpp"
#include "tetraloc/geometry.hpp"
#include "tetraloc/rng.hpp"
#include "tetraloc/sim.hpp"

namespace tetraloc {

// ---------------------------------------------------------------------------
// Covariance map
// ---------------------------------------------------------------------------

struct GridSpec {
  double pan_min_deg = -180.0, pan_max_deg = 180.0, pan_step_deg = 15.0;
  double tilt_min_deg = -90.0, tilt_max_deg = 90.0, tilt_step_deg = 15.0;
  double range_min_m = 1.5, range_max_m = 7.5, range_step_m = 1.0;
  int readings_per_cell = 50;

  static int count_steps(double lo, double hi, double step) {
    if (!(step > 0.0)) throw InvalidParameterError("grid step must be positive");
    const double span = hi - lo;
    if (span < 0.0) throw InvalidParameterError("grid range is inverted");
    const double ratio = span / step;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9)
      throw InvalidParameterError("grid step must divide the range evenly");
    return static_cast<int>(rounded) + 1;
  }

  int pan_count() const { return count_steps(pan_min_deg, pan_max_deg, pan_step_deg); }
  int tilt_count() const { return count_steps(tilt_min_deg, tilt_max_deg, tilt_step_deg); }
  int range_count() const { return count_steps(range_min_m, range_max_m, range_step_m); }
  int cell_count() const { return pan_count() * tilt_count() * range_count(); }

  void validate() const {
    (void)cell_count();
    if (readings_per_cell < 2)
      throw InvalidParameterError("readings_per_cell must be at least 2");
  }
};

struct ExperimentConfig {
  GridSpec grid{};
  NoiseModel noise{};
  EstimatorConfig estimator{};
  ArrayKind array_kind = ArrayKind::rta;
  double spacing = kDefaultSpacing;
  double wavelength = kDefaultWavelength;
  std::uint64_t seed = kDefaultSeed;
  std::optional<AntennaArray> custom_array;

  AntennaArray make_array() const {
    switch (array_kind) {
      case ArrayKind::rta: return build_rta(spacing);
      case ArrayKind::orthogonal: return build_orthogonal(spacing);
      case ArrayKind::custom: break;
    }
    if (custom_array) return *custom_array;
    throw InvalidParameterError("custom arrays need explicit coordinates");
  }
};

/// Per-cell error moments of the covariance-map experiment.
struct CovarianceMapCell {
  int range_idx = 0, pan_idx = 0, tilt_idx = 0;
  double range_m = 0, pan_deg = 0, tilt_deg = 0;
  Eigen::Vector3d truth_q = Eigen::Vector3d::Zero();
  int n_readings = 0;  // successful estimates
  int n_failures = 0;
  Eigen::Vector3d mean_err = Eigen::Vector3d::Zero();   // mean (q_hat - q)
  Eigen::Vector3d cov_e = Eigen::Vector3d::Zero();      // per-component mean squared error
  Eigen::Matrix3d cov_sigma = Eigen::Matrix3d::Zero();  // unbiased sample covariance of q_hat
  double cov_scalar = 0.0;                              // det(diag(cov_e) + cov_sigma)
  // Degree-domain statistics for map rendering.
  double bearing_err_mean_deg = 0, bearing_err_rms_deg = 0;
  double az_err_mean_deg = 0, az_err_rms_deg = 0;
  double el_err_mean_deg = 0, el_err_rms_deg = 0;
  double range_err_mean_m = 0, range_err_rms_m = 0;
};

/// Error moments of >= 2 estimates against one ground-truth pose:
/// cov_e from mean squared Cartesian error, cov_sigma as the unbiased sample
/// covariance of the estimated positions, scalar = det of their sum.
inline CovarianceMapCell covariance_cell(std::span<const RelativeEstimate> estimates,
                                         const TruePose& truth) {
  if (estimates.size() < 2)
    throw InsufficientDataError("covariance cell needs at least 2 estimates");
  CovarianceMapCell cell;
  cell.truth_q = truth.relative_position();
  cell.n_readings = static_cast<int>(estimates.size());
  const double n = static_cast<double>(estimates.size());

  Eigen::Vector3d mean_pos = Eigen::Vector3d::Zero();
  for (const RelativeEstimate& e : estimates) {
    const Eigen::Vector3d err = e.position - cell.truth_q;
    cell.mean_err += err;
    cell.cov_e += err.cwiseProduct(err);
    mean_pos += e.position;
  }
  cell.mean_err /= n;
  cell.cov_e /= n;
  mean_pos /= n;
  for (const RelativeEstimate& e : estimates) {
    const Eigen::Vector3d d = e.position - mean_pos;
    cell.cov_sigma += d * d.transpose();
  }
  cell.cov_sigma /= (n - 1.0);
  cell.cov_scalar =
      (Eigen::Matrix3d(cell.cov_e.asDiagonal()) + cell.cov_sigma).determinant();
  return cell;
}

namespace detail {

inline double wrap_deg180(double deg) {
  return deg - 360.0 * std::floor((deg + 180.0) / 360.0);
}

inline void fill_angular_stats(CovarianceMapCell& cell,
                               const std::vector<RelativeEstimate>& estimates,
                               const Eigen::Vector3d& truth_bearing, double truth_range) {
  if (estimates.empty()) return;
  const double truth_az = rad_to_deg(std::atan2(truth_bearing.z(), truth_bearing.x()));
  const double truth_el = rad_to_deg(std::asin(std::clamp(truth_bearing.y(), -1.0, 1.0)));
  double sum_b = 0, sum_b2 = 0, sum_az = 0, sum_az2 = 0, sum_el = 0, sum_el2 = 0;
  double sum_r = 0, sum_r2 = 0;
  for (const RelativeEstimate& e : estimates) {
    const double b =
        rad_to_deg(std::atan2(e.bearing.cross(truth_bearing).norm(), e.bearing.dot(truth_bearing)));
    const double az = rad_to_deg(std::atan2(e.bearing.z(), e.bearing.x()));
    const double el = rad_to_deg(std::asin(std::clamp(e.bearing.y(), -1.0, 1.0)));
    const double daz = wrap_deg180(az - truth_az);
    const double del = el - truth_el;
    const double dr = e.range - truth_range;
    sum_b += b;
    sum_b2 += b * b;
    sum_az += daz;
    sum_az2 += daz * daz;
    sum_el += del;
    sum_el2 += del * del;
    sum_r += dr;
    sum_r2 += dr * dr;
  }
  const double n = static_cast<double>(estimates.size());
  cell.bearing_err_mean_deg = sum_b / n;
  cell.bearing_err_rms_deg = std::sqrt(sum_b2 / n);
  cell.az_err_mean_deg = sum_az / n;
  cell.az_err_rms_deg = std::sqrt(sum_az2 / n);
  cell.el_err_mean_deg = sum_el / n;
  cell.el_err_rms_deg = std::sqrt(sum_el2 / n);
  cell.range_err_mean_m = sum_r / n;
  cell.range_err_rms_m = std::sqrt(sum_r2 / n);
}

}  // namespace detail

/// Receiver pose for one grid cell: the receiver pans/tilts in place while the
/// source stays on the world x axis at the cell range, mirroring a pan-tilt
/// calibration rig.
inline TruePose grid_pose(double range_m, double pan_rad, double tilt_rad) {
  TruePose pose;
  pose.p_i = Eigen::Vector3d(range_m, 0.0, 0.0);
  pose.p_j = Eigen::Vector3d::Zero();
  pose.R_j = (Eigen::AngleAxisd(-pan_rad, Eigen::Vector3d::UnitY()) *
              Eigen::AngleAxisd(tilt_rad, Eigen::Vector3d::UnitZ()))
                 .toRotationMatrix();
  return pose;
}

/// One cell: `readings_per_cell` independent pings, failures recorded
/// separately and excluded from the moments.
inline CovarianceMapCell run_covariance_cell(const ExperimentConfig& cfg,
                                             const AntennaArray& array, int range_idx,
                                             int pan_idx, int tilt_idx) {
  const double range = cfg.grid.range_min_m + range_idx * cfg.grid.range_step_m;
  const double pan = cfg.grid.pan_min_deg + pan_idx * cfg.grid.pan_step_deg;
  const double tilt = cfg.grid.tilt_min_deg + tilt_idx * cfg.grid.tilt_step_deg;
  const TruePose pose = grid_pose(range, deg_to_rad(pan), deg_to_rad(tilt));

  const std::string stream = "cell/" + std::to_string(range_idx) + "/" + std::to_string(pan_idx) +
                             "/" + std::to_string(tilt_idx);
  Rng rng(substream_seed(cfg.seed, stream));

  std::vector<RelativeEstimate> estimates;
  estimates.reserve(static_cast<std::size_t>(cfg.grid.readings_per_cell));
  int failures = 0;
  const CalibrationTable calib{};  // channel biases default to zero in this experiment
  for (int reading = 0; reading < cfg.grid.readings_per_cell; ++reading) {
    const RppObservation obs = synth_observation(array, pose, cfg.noise, rng, cfg.wavelength);
    try {
      estimates.push_back(
          estimate_relative(obs, array, calib, cfg.estimator, cfg.noise.tick_seconds));
    } catch (const Error&) {
      ++failures;
    }
  }

  CovarianceMapCell cell;
  if (estimates.size() >= 2) {
    cell = covariance_cell(estimates, pose);
  } else {
    cell.truth_q = pose.relative_position();
    cell.n_readings = static_cast<int>(estimates.size());
  }
  cell.range_idx = range_idx;
  cell.pan_idx = pan_idx;
  cell.tilt_idx = tilt_idx;
  cell.range_m = range;
  cell.pan_deg = pan;
  cell.tilt_deg = tilt;
  cell.n_failures = failures;
  detail::fill_angular_stats(cell, estimates, true_bearing(pose), pose.range());
  return cell;
}

/// Full grid sweep; cells are independent (named random sub-streams), so jobs
/// only change wall time, never results.
inline std::vector<CovarianceMapCell> run_covariance_experiment(const ExperimentConfig& cfg,
                                                                int jobs = 1) {
  cfg.grid.validate();
  cfg.noise.validate();
  const AntennaArray array = cfg.make_array();
  const int pans = cfg.grid.pan_count();
  const int tilts = cfg.grid.tilt_count();
  const int ranges = cfg.grid.range_count();
  std::vector<CovarianceMapCell> cells(static_cast<std::size_t>(cfg.grid.cell_count()));

  auto cell_at = [&](int flat) {
    const int range_idx = flat / (pans * tilts);
    const int rem = flat % (pans * tilts);
    const int pan_idx = rem / tilts;
    const int tilt_idx = rem % tilts;
    cells[static_cast<std::size_t>(flat)] =
        run_covariance_cell(cfg, array, range_idx, pan_idx, tilt_idx);
  };

  const int total = ranges * pans * tilts;
  if (jobs <= 1) {
    for (int flat = 0; flat < total; ++flat) cell_at(flat);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int worker_count = std::min(jobs, total);
    workers.reserve(static_cast<std::size_t>(worker_count));
    for (int w = 0; w < worker_count; ++w) {
      workers.emplace_back([&] {
        for (int flat = next.fetch_add(1); flat < total; flat = next.fetch_add(1)) cell_at(flat);
      });
    }
    for (auto& t : workers) t.join();
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Trajectory + throughput experiments (protocol-driven)
// ---------------------------------------------------------------------------

inline constexpr double kChannelCapacityRpps = 20.0;  // advertised transactions/s

struct TrajectoryResult {
  std::vector<PingRecord> pings;
  std::vector<TransactionRecord> transactions;
  std::vector<std::string> frames;
  long dropped_requests = 0;
};

/// CSMA-multiplexed pings from every mobile agent to the observer at
/// `rpp_rate_hz` per sender. Senders start phase-shifted within one period.
inline TrajectoryResult run_trajectory_experiment(const std::vector<Agent>& agents,
                                                  int observer_id, double duration_s,
                                                  double rpp_rate_hz, const SimConfig& sim_cfg,
                                                  std::size_t msg_len = 8) {
  if (agents.size() < 2) throw InvalidParameterError("need at least 2 agents");
  const int senders = static_cast<int>(agents.size()) - 1;
  if (!(rpp_rate_hz > 0.0)) throw InvalidParameterError("rpp_rate must be positive");
  if (rpp_rate_hz * senders > kChannelCapacityRpps + 1e-9)
    throw InvalidParameterError("requested RPP rate exceeds the 20/s channel capacity");

  SimWorld world(agents, sim_cfg);
  const auto period_us = static_cast<std::int64_t>(std::llround(1e6 / rpp_rate_hz));
  const auto end_us = static_cast<std::int64_t>(std::llround(duration_s * 1e6));
  int sender_index = 0;
  for (const Agent& agent : agents) {
    if (agent.id == observer_id) continue;
    const std::int64_t offset = sender_index * period_us / senders;
    std::vector<std::uint8_t> payload(msg_len, static_cast<std::uint8_t>(agent.id));
    for (std::int64_t t = offset; t <= end_us; t += period_us)
      world.submit(agent.id, observer_id, payload, t);
    ++sender_index;
  }
  world.run_until(end_us);

  TrajectoryResult result;
  result.pings = world.pings();
  result.transactions = world.transactions();
  result.frames = world.frame_trace();
  result.dropped_requests = world.dropped_requests();
  return result;
}

struct ThroughputResult {
  double total_rate = 0.0;           // completed RPP/s on the channel
  double per_agent_rate = 0.0;       // mean over senders
  std::vector<double> sender_rates;  // one per sender, same order as sender ids
  std::vector<int> sender_ids;
  long completed = 0;
  long failed = 0;
  std::vector<TransactionRecord> transactions;
};

/// Saturating senders toward one receiver; returns measured completion rates.
inline ThroughputResult measure_throughput(int n_agents, std::size_t msg_len, double duration_s,
                                           const SimConfig& sim_cfg) {
  if (n_agents < 2) throw InvalidParameterError("throughput needs at least 2 agents");
  std::vector<Agent> agents;
  const int receiver_id = n_agents;
  for (int id = 1; id <= n_agents; ++id) {
    Agent a;
    a.id = id;
    // Static ring around the receiver at 3 m.
    if (id == receiver_id) {
      a.trajectory.start = Eigen::Vector3d::Zero();
    } else {
      const double angle = 2.0 * kPi * (id - 1) / std::max(1, n_agents - 1);
      a.trajectory.start = 3.0 * Eigen::Vector3d(std::cos(angle), 0.0, std::sin(angle));
    }
    agents.push_back(a);
  }

  SimWorld world(agents, sim_cfg);
  for (int id = 1; id < receiver_id; ++id) world.saturate(id, receiver_id, msg_len);
  const auto end_us = static_cast<std::int64_t>(std::llround(duration_s * 1e6));
  world.run_until(end_us);

  ThroughputResult result;
  result.transactions = world.transactions();
  std::map<int, long> per_sender;
  for (int id = 1; id < receiver_id; ++id) per_sender[id] = 0;
  for (const TransactionRecord& t : result.transactions) {
    if (t.responder_done) {
      ++result.completed;
      ++per_sender[t.initiator];
    } else if (t.end_us >= 0 && t.failure != FailureCause::none) {
      ++result.failed;
    }
  }
  result.total_rate = static_cast<double>(result.completed) / duration_s;
  for (auto& [id, count] : per_sender) {
    result.sender_ids.push_back(id);
    result.sender_rates.push_back(static_cast<double>(count) / duration_s);
  }
  result.per_agent_rate = result.total_rate / static_cast<double>(n_agents - 1);
  return result;
}

// ---------------------------------------------------------------------------
// Output filtering
// ---------------------------------------------------------------------------

struct TimedVec3 {
  double t_s = 0.0;
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
};

/// Single-pole low-pass (exponential smoothing), alpha derived from the cutoff
/// and each sample interval; DC gain is exactly 1.
inline std::vector<TimedVec3> lowpass_filter(std::span<const TimedVec3> series, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw InvalidParameterError("cutoff must be positive");
  std::vector<TimedVec3> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i == 0) {
      out.push_back(series[0]);
      continue;
    }
    const double dt = series[i].t_s - series[i - 1].t_s;
    if (!(dt > 0.0)) throw InvalidSeriesError("timestamps must be strictly increasing");
    const double alpha = 1.0 - std::exp(-2.0 * kPi * cutoff_hz * dt);
    TimedVec3 next;
    next.t_s = series[i].t_s;
    next.value = out.back().value + alpha * (series[i].value - out.back().value);
    out.push_back(next);
  }
  return out;
}

}  // namespace tetraloc
