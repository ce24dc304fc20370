#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tetraloc/config.hpp"
#include "tetraloc/experiments.hpp"

namespace tetraloc {

namespace detail {

inline std::string csv_num(double v) { return format_double(v); }

}  // namespace detail

/// Fixed-schema covariance-map CSV, one row per grid cell.
inline std::string covmap_csv(const std::vector<CovarianceMapCell>& cells) {
  std::ostringstream out;
  out << "range_idx,pan_idx,tilt_idx,range_m,pan_deg,tilt_deg,"
         "truth_x_m,truth_y_m,truth_z_m,n_readings,n_failures,"
         "mean_err_x_m,mean_err_y_m,mean_err_z_m,"
         "cov_e_x_m2,cov_e_y_m2,cov_e_z_m2,"
         "cov_s_xx_m2,cov_s_xy_m2,cov_s_xz_m2,cov_s_yy_m2,cov_s_yz_m2,cov_s_zz_m2,"
         "cov_scalar_m6,"
         "bearing_err_mean_deg,bearing_err_rms_deg,"
         "az_err_mean_deg,az_err_rms_deg,el_err_mean_deg,el_err_rms_deg,"
         "range_err_mean_m,range_err_rms_m\n";
  using detail::csv_num;
  for (const CovarianceMapCell& c : cells) {
    out << c.range_idx << ',' << c.pan_idx << ',' << c.tilt_idx << ',' << csv_num(c.range_m) << ','
        << csv_num(c.pan_deg) << ',' << csv_num(c.tilt_deg) << ',' << csv_num(c.truth_q.x()) << ','
        << csv_num(c.truth_q.y()) << ',' << csv_num(c.truth_q.z()) << ',' << c.n_readings << ','
        << c.n_failures << ',' << csv_num(c.mean_err.x()) << ',' << csv_num(c.mean_err.y()) << ','
        << csv_num(c.mean_err.z()) << ',' << csv_num(c.cov_e.x()) << ',' << csv_num(c.cov_e.y())
        << ',' << csv_num(c.cov_e.z()) << ',' << csv_num(c.cov_sigma(0, 0)) << ','
        << csv_num(c.cov_sigma(0, 1)) << ',' << csv_num(c.cov_sigma(0, 2)) << ','
        << csv_num(c.cov_sigma(1, 1)) << ',' << csv_num(c.cov_sigma(1, 2)) << ','
        << csv_num(c.cov_sigma(2, 2)) << ',' << csv_num(c.cov_scalar) << ','
        << csv_num(c.bearing_err_mean_deg) << ',' << csv_num(c.bearing_err_rms_deg) << ','
        << csv_num(c.az_err_mean_deg) << ',' << csv_num(c.az_err_rms_deg) << ','
        << csv_num(c.el_err_mean_deg) << ',' << csv_num(c.el_err_rms_deg) << ','
        << csv_num(c.range_err_mean_m) << ',' << csv_num(c.range_err_rms_m) << "\n";
  }
  return out.str();
}

/// Aggregate quality numbers over the "operational region": |tilt| < 60 deg
/// and range <= 7 m.
struct CovmapSummary {
  double operational_mean_bearing_err_deg = 0.0;
  double operational_range_rmse_m = 0.0;
  long operational_cells = 0;
  long total_failures = 0;
};

inline CovmapSummary summarize_covmap(const std::vector<CovarianceMapCell>& cells) {
  CovmapSummary s;
  double bearing_sum = 0.0;
  double range_sq_sum = 0.0;
  long range_cells = 0;
  for (const CovarianceMapCell& c : cells) {
    s.total_failures += c.n_failures;
    if (std::abs(c.tilt_deg) < 60.0 && c.range_m <= 7.0 && c.n_readings > 0) {
      bearing_sum += c.bearing_err_mean_deg;
      ++s.operational_cells;
      range_sq_sum += c.range_err_rms_m * c.range_err_rms_m;
      ++range_cells;
    }
  }
  if (s.operational_cells > 0)
    s.operational_mean_bearing_err_deg = bearing_sum / static_cast<double>(s.operational_cells);
  if (range_cells > 0) s.operational_range_rmse_m = std::sqrt(range_sq_sum / range_cells);
  return s;
}

/// Trajectory CSV: raw estimate, low-pass output, and truth per ping.
inline std::string trajectory_csv(const std::vector<PingRecord>& pings, double filter_cutoff_hz) {
  // Filter per transmitting agent.
  std::map<int, std::vector<TimedVec3>> raw_series;
  for (const PingRecord& p : pings)
    if (p.ok)
      raw_series[p.tx_id].push_back({static_cast<double>(p.t_us) * 1e-6, p.estimate.position});
  std::map<int, std::vector<TimedVec3>> filtered;
  std::map<int, std::size_t> cursor;
  for (auto& [id, series] : raw_series) {
    filtered[id] = lowpass_filter(series, filter_cutoff_hz);
    cursor[id] = 0;
  }

  std::ostringstream out;
  out << "t_s,tx_agent,status,failure_cause,"
         "est_x_m,est_y_m,est_z_m,filt_x_m,filt_y_m,filt_z_m,"
         "truth_x_m,truth_y_m,truth_z_m,range_est_m,range_true_m,"
         "bearing_err_deg,rows_used,condition_number\n";
  using detail::csv_num;
  for (const PingRecord& p : pings) {
    const double t_s = static_cast<double>(p.t_us) * 1e-6;
    out << csv_num(t_s) << ',' << p.tx_id << ',' << (p.ok ? "ok" : "failed") << ','
        << to_string(p.cause) << ',';
    if (p.ok) {
      const Eigen::Vector3d& f = filtered[p.tx_id][cursor[p.tx_id]++].value;
      const Eigen::Vector3d truth_bearing = p.truth_q.normalized();
      const double bearing_err = rad_to_deg(std::atan2(
          p.estimate.bearing.cross(truth_bearing).norm(), p.estimate.bearing.dot(truth_bearing)));
      out << csv_num(p.estimate.position.x()) << ',' << csv_num(p.estimate.position.y()) << ','
          << csv_num(p.estimate.position.z()) << ',' << csv_num(f.x()) << ',' << csv_num(f.y())
          << ',' << csv_num(f.z()) << ',' << csv_num(p.truth_q.x()) << ','
          << csv_num(p.truth_q.y()) << ',' << csv_num(p.truth_q.z()) << ','
          << csv_num(p.estimate.range) << ',' << csv_num(p.truth_q.norm()) << ','
          << csv_num(bearing_err) << ',' << p.estimate.rows_used << ','
          << csv_num(p.estimate.condition_number) << "\n";
    } else {
      out << ",,,,,," << csv_num(p.truth_q.x()) << ',' << csv_num(p.truth_q.y()) << ','
          << csv_num(p.truth_q.z()) << ",," << csv_num(p.truth_q.norm()) << ",,,\n";
    }
  }
  return out.str();
}

inline nlohmann::json throughput_json(const ThroughputResult& r, int agents, int msg_len,
                                      double duration_s) {
  nlohmann::json j;
  j["agents"] = agents;
  j["msg_len"] = msg_len;
  j["duration_s"] = duration_s;
  j["total_rate_rpps"] = r.total_rate;
  j["per_agent_rate_rpps"] = r.per_agent_rate;
  j["sender_ids"] = r.sender_ids;
  j["sender_rates_rpps"] = r.sender_rates;
  j["completed"] = r.completed;
  j["failed"] = r.failed;
  return j;
}

/// Run manifest: config echo + hash + seed + per-run summary.
inline nlohmann::json make_manifest(const std::string& subcommand, const Config& cfg,
                                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["tool"] = "tetraloc";
  j["version"] = "0.1.0";
  j["subcommand"] = subcommand;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["config"] = emit_config(cfg);
  j["outputs"] = outputs;
  j["notes"]["error_dimension"] = "cartesian_m";
  j["notes"]["angular_stats"] = "per-cell azimuth/elevation statistics are logged in degrees";
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("failed while writing " + path);
}

}  // namespace tetraloc
