#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "tetraloc/channel.hpp"
#include "tetraloc/constants.hpp"
#include "tetraloc/errors.hpp"
#include "tetraloc/geometry.hpp"

namespace tetraloc {

inline constexpr double kDefaultRejectThreshold = deg_to_rad(165.0);

enum class IncidenceMode { paper, exact };

/// Per-pair bias compensation terms, found by calibration against known
/// bearings.
struct CalibrationTable {
  std::array<double, 6> pair_biases{};  // rad, added to measured differences
  double residual_rms = 0.0;            // rad
};

/// Six wrapped per-pair phase differences after bias compensation.
struct PhaseDifferenceSet {
  std::array<double, 6> values{};        // rad, in [-pi, pi)
  std::array<double, 6> bias_applied{};  // rad
};

/// Per-pair incidence angles plus the row-selection mask.
struct IncidenceAngleSet {
  std::array<double, 6> values{};   // rad
  std::array<bool, 6> valid_mask{};  // |dphi| within the rejection threshold
  std::array<bool, 6> clamped{};     // sine argument clipped to +-1 before asin
};

struct BearingSolution {
  Eigen::Vector3d raw = Eigen::Vector3d::Zero();
  double condition_number = 0.0;
  int rows_used = 0;
};

/// Composed relative-position estimate.
struct RelativeEstimate {
  double range = 0.0;                                 // m
  Eigen::Vector3d bearing = Eigen::Vector3d::Zero();  // unit
  Eigen::Vector3d position = Eigen::Vector3d::Zero(); // m, = range * bearing
  int rows_used = 0;
  double condition_number = 0.0;
};

struct EstimatorConfig {
  IncidenceMode mode = IncidenceMode::paper;
  double reject_threshold = kDefaultRejectThreshold;  // rad, on |dphi|
  double wavelength = kDefaultWavelength;             // m
  double condition_limit = 1e8;
  bool use_paper_matrix = false;  // verbatim published rows instead of the canonical ones
};

/// Phase of arrival from a first-path I/Q sample, SFD angle removed:
/// wrap(atan2(q, i) - beta).
inline double phase_of_arrival(const IQSample& sample, double beta) {
  if (!(sample.amplitude() > 0.0)) throw NoFirstPathError("no first path: zero I/Q amplitude");
  return wrap_pi(std::atan2(sample.q_component, sample.i_component) - beta);
}

/// Bias-compensated differences from raw measured per-pair values.
inline PhaseDifferenceSet apply_calibration(const std::array<double, 6>& measured,
                                            const CalibrationTable& calib) {
  PhaseDifferenceSet set;
  for (int k = 0; k < 6; ++k) {
    set.values[k] = wrap_pi(measured[k] + calib.pair_biases[k]);
    set.bias_applied[k] = calib.pair_biases[k];
  }
  return set;
}

/// Bias-compensated differences from 4 antenna phases:
/// wrap(phi_n - phi_o + bias_{n,o}) for each pair in kPairOrder.
inline PhaseDifferenceSet phase_differences(const std::array<double, 4>& phases,
                                            const CalibrationTable& calib) {
  return apply_calibration(pair_differences(phases), calib);
}

/// Row-selection mask: keep pair k iff |dphi_k| <= threshold. Throws once
/// fewer than 3 rows survive, since the bearing solve needs rank 3.
inline std::array<bool, 6> select_rows(const PhaseDifferenceSet& diffs,
                                       double threshold = kDefaultRejectThreshold) {
  std::array<bool, 6> mask;
  int kept = 0;
  for (int k = 0; k < 6; ++k) {
    mask[k] = std::abs(diffs.values[k]) <= threshold;
    kept += mask[k] ? 1 : 0;
  }
  if (kept < 3)
    throw InsufficientGeometryError("only " + std::to_string(kept) +
                                    " antenna pairs under the phase-difference threshold");
  return mask;
}

/// Per-pair ratio of baseline length to half wavelength; 0.95 for the default
/// spacing. Converts phase differences to incidence sines.
inline std::array<double, 6> spacing_ratios(const DirectionMatrix& matrix, double wavelength) {
  std::array<double, 6> ratios;
  for (int k = 0; k < 6; ++k) ratios[k] = 2.0 * matrix.baseline_lengths[k] / wavelength;
  return ratios;
}

/// Incidence angle per pair.
///   paper mode: alpha = (1/rho) * asin(dphi / pi)   (the published form)
///   exact mode: alpha = asin(dphi / (rho * pi))     (algebraic inverse of the
///                                                    plane-wave model)
/// Out-of-domain sine arguments are clamped to +-1 and flagged, not rejected:
/// noise can push a difference past the mathematical limit while it is still
/// under the rejection threshold.
inline IncidenceAngleSet incidence_angles(const PhaseDifferenceSet& diffs, IncidenceMode mode,
                                          const std::array<double, 6>& ratios,
                                          double threshold = kDefaultRejectThreshold) {
  IncidenceAngleSet set;
  for (int k = 0; k < 6; ++k) {
    const double dphi = diffs.values[k];
    double arg = mode == IncidenceMode::paper ? dphi / kPi : dphi / (ratios[k] * kPi);
    set.clamped[k] = std::abs(arg) > 1.0;
    arg = std::clamp(arg, -1.0, 1.0);
    const double asin_val = std::asin(arg);
    set.values[k] = mode == IncidenceMode::paper ? asin_val / ratios[k] : asin_val;
    set.valid_mask[k] = std::abs(dphi) <= threshold;
  }
  return set;
}

inline IncidenceAngleSet incidence_angles(const PhaseDifferenceSet& diffs, IncidenceMode mode) {
  std::array<double, 6> ratios;
  ratios.fill(kSpacingFactor);
  return incidence_angles(diffs, mode, ratios);
}

/// Least-squares bearing from the valid rows of A * v = sin(alpha), via SVD
/// pseudo-inverse. Singular values below 1e-10 * sigma_max are treated as
/// zero; a condition number beyond the configured limit is a degenerate
/// geometry.
inline BearingSolution solve_bearing(const DirectionMatrix& matrix, const IncidenceAngleSet& angles,
                                     double condition_limit = 1e8) {
  int rows_used = 0;
  for (bool v : angles.valid_mask) rows_used += v ? 1 : 0;
  if (rows_used < 3)
    throw InsufficientGeometryError("bearing solve needs at least 3 valid rows, have " +
                                    std::to_string(rows_used));

  Eigen::MatrixXd a(rows_used, 3);
  Eigen::VectorXd b(rows_used);
  int r = 0;
  for (int k = 0; k < 6; ++k) {
    if (!angles.valid_mask[k]) continue;
    a.row(r) = matrix.rows.row(k);
    b(r) = std::sin(angles.values[k]);
    ++r;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double sigma_max = sv(0);
  const double sigma_min = sv(sv.size() - 1);
  const double condition = sigma_min > 0.0 ? sigma_max / sigma_min
                                           : std::numeric_limits<double>::infinity();
  if (!(condition <= condition_limit))
    throw DegenerateGeometryError("rank-deficient antenna-pair sub-matrix (condition " +
                                  std::to_string(condition) + ")");
  svd.setThreshold(1e-10);

  BearingSolution sol;
  sol.raw = svd.solve(b);
  sol.condition_number = condition;
  sol.rows_used = rows_used;
  return sol;
}

/// Unit-length bearing from the raw solve output.
inline Eigen::Vector3d normalize_bearing(const Eigen::Vector3d& raw) {
  const double norm = raw.norm();
  if (!(norm > 1e-150)) throw AmbiguousBearingError("zero raw bearing: no direction information");
  return raw / norm;
}

struct AoaResult {
  Eigen::Vector3d bearing = Eigen::Vector3d::Zero();
  int rows_used = 0;
  double condition_number = 0.0;
};

/// AoA pipeline for one observation: bias-compensated differences, row
/// selection, incidence angles, pseudo-inverse solve, normalization.
inline AoaResult estimate_aoa(const RppObservation& obs, const AntennaArray& array,
                              const CalibrationTable& calib, const EstimatorConfig& cfg = {}) {
  const DirectionMatrix matrix =
      cfg.use_paper_matrix ? paper_matrix(array.spacing) : baseline_matrix(array);
  const PhaseDifferenceSet diffs = apply_calibration(obs.pair_diffs, calib);
  const std::array<bool, 6> mask = select_rows(diffs, cfg.reject_threshold);
  IncidenceAngleSet angles =
      incidence_angles(diffs, cfg.mode, spacing_ratios(matrix, cfg.wavelength), cfg.reject_threshold);
  angles.valid_mask = mask;
  const BearingSolution sol = solve_bearing(matrix, angles, cfg.condition_limit);
  AoaResult result;
  result.bearing = normalize_bearing(sol.raw);
  result.rows_used = sol.rows_used;
  result.condition_number = sol.condition_number;
  return result;
}

/// Range from a DS-TWR exchange:
///   ToF = (R1 * R2 - r1 * r2) / (R1 + R2 + r1 + r2)
/// which cancels first-order clock drift even with asymmetric reply delays.
inline double twr_range(const TwrTimestamps& ts, double tick_seconds = kTickSeconds) {
  const double round1 = ts.resp_rx - ts.poll_tx;   // initiator clock
  const double reply2 = ts.final_tx - ts.resp_rx;  // initiator clock
  const double reply1 = ts.resp_tx - ts.poll_rx;   // responder clock
  const double round2 = ts.final_rx - ts.resp_tx;  // responder clock
  if (!(round1 > 0.0) || !(round2 > 0.0) || !(reply1 > 0.0) || !(reply2 > 0.0))
    throw RangingFailureError("non-positive DS-TWR interval");
  const double denom = round1 + round2 + reply1 + reply2;
  const double tof_ticks = (round1 * round2 - reply1 * reply2) / denom;
  if (tof_ticks < 0.0) throw RangingFailureError("negative computed time of flight");
  return tof_ticks * tick_seconds * kSpeedOfLight;
}

/// q_hat = range * bearing.
inline RelativeEstimate compose_estimate(double range, const Eigen::Vector3d& bearing) {
  if (!(range >= 0.0) || !std::isfinite(range)) throw InvalidParameterError("invalid range");
  if (std::abs(bearing.norm() - 1.0) > 1e-9)
    throw InvalidParameterError("bearing must be unit length");
  RelativeEstimate est;
  est.range = range;
  est.bearing = bearing;
  est.position = range * bearing;
  return est;
}

/// Full relative estimate for one observation: DS-TWR range + AoA bearing.
inline RelativeEstimate estimate_relative(const RppObservation& obs, const AntennaArray& array,
                                          const CalibrationTable& calib,
                                          const EstimatorConfig& cfg = {},
                                          double tick_seconds = kTickSeconds) {
  const AoaResult aoa = estimate_aoa(obs, array, calib, cfg);
  const double range = twr_range(obs.twr, tick_seconds);
  RelativeEstimate est = compose_estimate(range, aoa.bearing);
  est.rows_used = aoa.rows_used;
  est.condition_number = aoa.condition_number;
  return est;
}

/// Observation assembled from raw first-path I/Q samples: phases are
/// extracted with the per-antenna SFD angles, then differenced.
inline RppObservation observation_from_iq(const std::array<IQSample, 4>& iq,
                                          const std::array<double, 4>& sfd_angles,
                                          const TwrTimestamps& twr) {
  RppObservation obs;
  obs.iq = iq;
  for (int n = 0; n < 4; ++n) obs.phases[n] = phase_of_arrival(iq[n], sfd_angles[n]);
  obs.pair_diffs = pair_differences(obs.phases);
  obs.twr = twr;
  return obs;
}

/// One calibration input: a known true bearing plus the differences actually
/// measured for it.
struct CalibrationSample {
  Eigen::Vector3d bearing = Eigen::Vector3d::Zero();  // unit, body frame
  std::array<double, 6> measured_diffs{};             // rad, wrapped
};

inline CalibrationSample calibration_sample_from_phases(const Eigen::Vector3d& bearing,
                                                        const std::array<double, 4>& phases) {
  return CalibrationSample{bearing, pair_differences(phases)};
}

/// Per-pair bias factors minimizing the squared circular residual between
/// geometric and measured differences: the circular mean of
/// (expected - measured) per pair. Residuals are computed with wrapped
/// differences to avoid +-pi boundary artifacts.
inline CalibrationTable calibrate_bias(std::span<const CalibrationSample> samples,
                                       const AntennaArray& array,
                                       double wavelength = kDefaultWavelength) {
  if (samples.size() < 2) throw CalibrationError("need at least 2 calibration samples");
  bool distinct = false;
  for (std::size_t s = 1; s < samples.size() && !distinct; ++s)
    distinct = (samples[s].bearing - samples[0].bearing).norm() > 1e-12;
  if (!distinct) throw CalibrationError("calibration samples must cover distinct bearings");

  const DirectionMatrix matrix = baseline_matrix(array);
  const double k_wave = 2.0 * kPi / wavelength;

  CalibrationTable table;
  double residual_sq_sum = 0.0;
  for (int k = 0; k < 6; ++k) {
    double sin_sum = 0.0;
    double cos_sum = 0.0;
    for (const CalibrationSample& s : samples) {
      const double expected =
          wrap_pi(k_wave * matrix.baseline_lengths[k] * matrix.rows.row(k).dot(s.bearing));
      const double delta = wrap_pi(expected - s.measured_diffs[k]);
      sin_sum += std::sin(delta);
      cos_sum += std::cos(delta);
    }
    table.pair_biases[k] = std::atan2(sin_sum, cos_sum);
    for (const CalibrationSample& s : samples) {
      const double expected =
          wrap_pi(k_wave * matrix.baseline_lengths[k] * matrix.rows.row(k).dot(s.bearing));
      const double r = wrap_pi(wrap_pi(expected - s.measured_diffs[k]) - table.pair_biases[k]);
      residual_sq_sum += r * r;
    }
  }
  table.residual_rms = std::sqrt(residual_sq_sum / (6.0 * static_cast<double>(samples.size())));
  return table;
}

}  // namespace tetraloc
