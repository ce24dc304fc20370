#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>

#include "tetraloc/constants.hpp"
#include "tetraloc/errors.hpp"
#include "tetraloc/geometry.hpp"
#include "tetraloc/rng.hpp"

namespace tetraloc {

/// Ground-truth relative geometry of one transmitter/receiver pair.
/// R_j rotates world coordinates into the receiver's body frame.
struct TruePose {
  Eigen::Vector3d p_i = Eigen::Vector3d::Zero();  // transmitter, world frame (m)
  Eigen::Vector3d p_j = Eigen::Vector3d::Zero();  // receiver, world frame (m)
  Eigen::Matrix3d R_j = Eigen::Matrix3d::Identity();

  double range() const { return (p_i - p_j).norm(); }
  Eigen::Vector3d relative_position() const { return R_j * (p_i - p_j); }
};

/// Unit bearing from receiver to transmitter in the receiver body frame.
inline Eigen::Vector3d true_bearing(const TruePose& pose) {
  const Eigen::Vector3d delta = pose.p_i - pose.p_j;
  const double dist = delta.norm();
  if (!(dist > 0.0)) throw DegeneratePoseError("coincident agents: bearing undefined");
  if ((pose.R_j * pose.R_j.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
          1e-9 ||
      pose.R_j.determinant() < 0.0)
    throw InvalidParameterError("receiver rotation must be orthonormal with det +1");
  return pose.R_j * (delta / dist);
}

/// First-path accumulator sample at one antenna.
struct IQSample {
  double i_component = 0.0;
  double q_component = 0.0;
  double first_path_time = 0.0;  // accumulator ticks

  double amplitude() const { return std::hypot(i_component, q_component); }
};

/// I/Q pair whose extracted phase (atan2(q, i) - beta) reproduces `phase`.
inline IQSample iq_from_phase(double phase, double amplitude, double beta = 0.0,
                              double first_path_time = 0.0) {
  if (!(amplitude > 0.0)) throw InvalidParameterError("I/Q amplitude must be positive");
  return IQSample{amplitude * std::cos(phase + beta), amplitude * std::sin(phase + beta),
                  first_path_time};
}

/// Measurement-corruption model for one link. Identical seeds give
/// bit-identical sample streams.
struct NoiseModel {
  double phase_sigma0 = 0.0;        // rad, noise floor per antenna
  double phase_sigma_slope = 0.0;   // rad of extra sigma per rad of steepest incidence
  double range_sigma = 0.0;         // m-equivalent jitter per RX timestamp
  double clock_drift_ppm = 0.0;     // per-device drift drawn uniformly in +-ppm
  std::array<double, 6> bias_true{};   // per-pair offsets a calibration should recover (rad)
  std::array<double, 4> sfd_true{};    // per-antenna SFD angles beta (rad)
  std::uint64_t seed = kDefaultSeed;
  bool quantize_timestamps = true;
  double tick_seconds = kTickSeconds;
  // Hook for direction-dependent systematic phase errors (enclosure
  // shadowing, antenna illumination); ships empty. Arguments: antenna index
  // 0..3, unit bearing in the body frame; returns a phase offset in rad.
  std::function<double(int, const Eigen::Vector3d&)> direction_bias;

  void validate() const {
    if (phase_sigma0 < 0 || phase_sigma_slope < 0 || range_sigma < 0 || clock_drift_ppm < 0)
      throw InvalidParameterError("noise sigmas must be non-negative");
  }
};

/// Device-tick timestamps of one double-sided two-way-ranging exchange.
/// poll/resp/final tx+rx, each on the owning device's clock. Values are
/// integral ticks when the exchange was quantized; the quantize flag exists so
/// noiseless validation runs can keep sub-tick resolution.
struct TwrTimestamps {
  double poll_tx = 0;   // initiator clock
  double poll_rx = 0;   // responder clock
  double resp_tx = 0;   // responder clock
  double resp_rx = 0;   // initiator clock
  double final_tx = 0;  // initiator clock
  double final_rx = 0;  // responder clock
};

/// One completed transaction's raw measurements. `truth` is carried for
/// evaluation only and is never consumed on the estimation path.
struct RppObservation {
  std::array<double, 4> phases{};      // extracted phases of arrival (rad)
  std::array<IQSample, 4> iq{};        // raw first-path samples (SFD angle baked in)
  std::array<double, 6> pair_diffs{};  // measured per-pair differences as seen by the receiver
  TwrTimestamps twr{};
  TruePose truth{};
};

inline double wrap_pi(double x) {
  return x - 2.0 * kPi * std::floor((x + kPi) / (2.0 * kPi));
}

namespace detail {

// Largest incidence magnitude across the 6 pairs; drives the heteroscedastic
// phase-noise term.
inline double steepest_incidence(const DirectionMatrix& m, const Eigen::Vector3d& bearing) {
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double s = std::clamp(m.rows.row(k).dot(bearing), -1.0, 1.0);
    worst = std::max(worst, std::abs(std::asin(s)));
  }
  return worst;
}

}  // namespace detail

/// Plane-wave phases of arrival at the 4 antennas for a source along unit
/// `bearing`: phi_n = wrap(2 pi / lambda * (a_n . v) + phi_common + beta_n + eps_n).
/// With zero noise and spacing 0.95 lambda / 2, every pair difference equals
/// 0.95 pi * (row . v).
inline std::array<double, 4> synth_phases(const AntennaArray& array, const Eigen::Vector3d& bearing,
                                          const NoiseModel& noise, Rng& rng,
                                          double wavelength = kDefaultWavelength) {
  noise.validate();
  const DirectionMatrix m = baseline_matrix(array);
  const double sigma =
      noise.phase_sigma0 + noise.phase_sigma_slope * detail::steepest_incidence(m, bearing);
  // Carrier phase is only meaningful in differences; one shared offset per observation.
  const double common = rng.uniform(-kPi, kPi);
  const double k_wave = 2.0 * kPi / wavelength;
  std::array<double, 4> phases;
  for (int n = 0; n < 4; ++n) {
    const double geometric = k_wave * array.positions[n].dot(bearing);
    const double eps = sigma > 0.0 ? rng.gaussian(0.0, sigma) : 0.0;
    const double directional = noise.direction_bias ? noise.direction_bias(n, bearing) : 0.0;
    phases[n] = wrap_pi(geometric + common + noise.sfd_true[n] + directional + eps);
  }
  return phases;
}

/// Per-pair differences of 4 phases in kPairOrder, wrapped to [-pi, pi).
inline std::array<double, 6> pair_differences(const std::array<double, 4>& phases) {
  std::array<double, 6> diffs;
  for (std::size_t k = 0; k < kPairOrder.size(); ++k) {
    const auto [n, o] = kPairOrder[k];
    diffs[k] = wrap_pi(phases[n - 1] - phases[o - 1]);
  }
  return diffs;
}

struct TwrDelays {
  double reply_j = 6.0e-3;  // poll rx -> resp tx at responder (s)
  double reply_i = 6.0e-3;  // resp rx -> final tx at initiator (s)
};

/// DS-TWR timestamps with explicit per-device clock drifts (+-ppm scale
/// factors), optional RX jitter and tick quantization. Pass rng = nullptr for
/// a fully deterministic exchange.
inline TwrTimestamps synth_twr_explicit(double range_m, double drift_i_ppm, double drift_j_ppm,
                                        const TwrDelays& delays, double jitter_sigma_m,
                                        bool quantize, Rng* rng,
                                        double tick_seconds = kTickSeconds) {
  if (!(delays.reply_i > 0.0) || !(delays.reply_j > 0.0))
    throw InvalidParameterError("TWR reply delays must be positive");
  if (range_m < 0.0) throw InvalidParameterError("range must be non-negative");
  const double tof = range_m / kSpeedOfLight;
  const double k_i = 1.0 + drift_i_ppm * 1e-6;
  const double k_j = 1.0 + drift_j_ppm * 1e-6;
  const double jitter_s = jitter_sigma_m / kSpeedOfLight;

  // True-time event schedule.
  const double t_poll_tx = 0.0;
  const double t_poll_rx = tof;
  const double t_resp_tx = tof + delays.reply_j;
  const double t_resp_rx = 2.0 * tof + delays.reply_j;
  const double t_final_tx = 2.0 * tof + delays.reply_j + delays.reply_i;
  const double t_final_rx = 3.0 * tof + delays.reply_j + delays.reply_i;

  auto stamp = [&](double t, double clock_scale, bool is_rx) -> double {
    double ticks = clock_scale * t / tick_seconds;
    if (is_rx && jitter_s > 0.0 && rng != nullptr)
      ticks += rng->gaussian(0.0, jitter_s / tick_seconds);
    return quantize ? static_cast<double>(std::llround(ticks)) : ticks;
  };

  TwrTimestamps ts;
  ts.poll_tx = stamp(t_poll_tx, k_i, false);
  ts.poll_rx = stamp(t_poll_rx, k_j, true);
  ts.resp_tx = stamp(t_resp_tx, k_j, false);
  ts.resp_rx = stamp(t_resp_rx, k_i, true);
  ts.final_tx = stamp(t_final_tx, k_i, false);
  ts.final_rx = stamp(t_final_rx, k_j, true);
  return ts;
}

/// DS-TWR exchange for a true pose; per-device drifts drawn from the noise
/// model's +-clock_drift_ppm.
inline TwrTimestamps synth_twr(const TruePose& pose, const NoiseModel& noise, Rng& rng,
                               const TwrDelays& delays = {}) {
  noise.validate();
  const double drift_i = noise.clock_drift_ppm > 0 ? rng.uniform(-noise.clock_drift_ppm, noise.clock_drift_ppm) : 0.0;
  const double drift_j = noise.clock_drift_ppm > 0 ? rng.uniform(-noise.clock_drift_ppm, noise.clock_drift_ppm) : 0.0;
  return synth_twr_explicit(pose.range(), drift_i, drift_j, delays, noise.range_sigma,
                            noise.quantize_timestamps, &rng, noise.tick_seconds);
}

/// Full forward model for one ping: antenna phases, first-path I/Q samples,
/// per-pair measured differences (with the pair-level bias corruption the
/// calibration is meant to recover), and DS-TWR timestamps.
inline RppObservation synth_observation(const AntennaArray& array, const TruePose& pose,
                                        const NoiseModel& noise, Rng& rng,
                                        double wavelength = kDefaultWavelength,
                                        const TwrDelays& delays = {}) {
  RppObservation obs;
  obs.truth = pose;
  const Eigen::Vector3d bearing = true_bearing(pose);
  obs.phases = synth_phases(array, bearing, noise, rng, wavelength);
  const double fp_ticks = pose.range() / kSpeedOfLight / noise.tick_seconds;
  for (int n = 0; n < 4; ++n)
    obs.iq[n] = iq_from_phase(obs.phases[n], 1.0, noise.sfd_true[n], fp_ticks);
  // Pair-level bias corrupts the differences as measured; it does not
  // decompose into the 4 antenna phases in general.
  const std::array<double, 6> raw = pair_differences(obs.phases);
  for (int k = 0; k < 6; ++k) obs.pair_diffs[k] = wrap_pi(raw[k] - noise.bias_true[k]);
  obs.twr = synth_twr(pose, noise, rng, delays);
  return obs;
}

}  // namespace tetraloc
