// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Each criterion pins its tolerance in code.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "support/exhaustive.hpp"
#include "support/oracles.hpp"
#include "tetraloc/cli.hpp"
#include "tetraloc/config.hpp"
#include "tetraloc/experiments.hpp"
#include "tetraloc/report.hpp"

using namespace tetraloc;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& measured) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              measured.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... vals) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, vals...);
  return buf;
}

NoiseModel noiseless() {
  NoiseModel n;
  n.quantize_timestamps = false;
  return n;
}

// --- criterion 1: noiseless exact-mode round trip --------------------------

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const AntennaArray array = build_rta(kDefaultSpacing);
  EstimatorConfig cfg;
  cfg.mode = IncidenceMode::exact;
  Rng rng(20001);
  double worst_bearing = 0.0;
  double worst_position = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double pan = rng.uniform(-kPi, kPi);
    const double tilt = rng.uniform(deg_to_rad(-60.0), deg_to_rad(60.0));
    const double range = rng.uniform(1.0, 7.5);
    const Eigen::Vector3d v = oracles::bearing_from_pan_tilt(pan, tilt);
    TruePose pose;
    pose.p_i = range * v;
    Rng obs_rng(substream_seed(9000, "c1/" + std::to_string(i)));
    const RppObservation obs = synth_observation(array, pose, noiseless(), obs_rng);
    const RelativeEstimate est = estimate_relative(obs, array, {}, cfg);
    worst_bearing = std::max(worst_bearing, oracles::angular_error_rad(est.bearing, v));
    worst_position = std::max(worst_position, (est.position - range * v).norm() / range);
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_bearing < 1e-9 && worst_position < 1e-9 && elapsed < 10.0;
  report(1, pass, "noiseless exact-mode round trip over 10000 bearings",
         fmt("max bearing err %.3e rad, max relative position err %.3e, %.2f s", worst_bearing,
             worst_position, elapsed));
}

// --- criterion 2: published incidence formula's approximation bound --------

void criterion_2() {
  const AntennaArray array = build_rta(kDefaultSpacing);
  const DirectionMatrix matrix = baseline_matrix(array);
  EstimatorConfig cfg;  // paper mode

  double worst = 0.0;
  double worst_pan = 0, worst_tilt = 0;
  for (double tilt = -59.0; tilt <= 59.0; tilt += 1.0) {
    for (double pan = -180.0; pan < 180.0; pan += 1.0) {
      const Eigen::Vector3d v = oracles::bearing_from_pan_tilt(deg_to_rad(pan), deg_to_rad(tilt));
      PhaseDifferenceSet diffs;
      for (int k = 0; k < 6; ++k)
        diffs.values[k] = wrap_pi(kSpacingFactor * kPi * matrix.rows.row(k).dot(v));
      const auto mask = select_rows(diffs, cfg.reject_threshold);
      auto angles = incidence_angles(diffs, IncidenceMode::paper,
                                     spacing_ratios(matrix, kDefaultWavelength));
      angles.valid_mask = mask;
      const Eigen::Vector3d est = normalize_bearing(solve_bearing(matrix, angles).raw);
      const double err = rad_to_deg(oracles::angular_error_rad(est, v));
      if (err > worst) {
        worst = err;
        worst_pan = pan;
        worst_tilt = tilt;
      }
    }
  }

  // Worked single-pair example at 60 degrees incidence.
  const double dphi60 = kSpacingFactor * kPi * std::sin(deg_to_rad(60.0));
  const double alpha_paper =
      rad_to_deg((1.0 / kSpacingFactor) * std::asin(dphi60 / kPi));
  const double gap = 60.0 - alpha_paper;

  const bool pass = worst <= 2.5 && gap >= 1.5 && gap <= 2.1;
  report(2, pass, "paper-mode noiseless bearing error bounded by the incidence approximation",
         fmt("max bearing err %.3f deg at pan %.0f tilt %.0f; 60-deg pair example -> %.3f deg, "
             "gap %.3f deg",
             worst, worst_pan, worst_tilt, alpha_paper, gap));
}

// --- criterion 3: calibrated-noise accuracy reproduction -------------------

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg;  // defaults = calibrated noise + reference grid
  const auto cells = run_covariance_experiment(experiment_from_config(cfg), 1);
  const CovmapSummary s = summarize_covmap(cells);
  const double elapsed = seconds_since(t0);
  const bool pass = cells.size() == 2275 && s.operational_mean_bearing_err_deg <= 15.0 &&
                    s.operational_range_rmse_m <= 0.25 && elapsed < 300.0;
  report(3, pass, "covariance map reproduces the reported accuracy envelope",
         fmt("%zu cells, operational mean bearing err %.2f deg (<=15), range RMSE %.3f m "
             "(<=0.25), %.1f s single-threaded",
             cells.size(), s.operational_mean_bearing_err_deg, s.operational_range_rmse_m,
             elapsed));
}

// --- criterion 4: transaction timing and channel rates ---------------------

void criterion_4() {
  SimConfig sim;
  sim.noise = NoiseModel{};

  // Minimum transaction duration, exact in the simulated timeline.
  Agent a1;
  a1.id = 1;
  a1.trajectory.start = {2.0, 0.0, 1.0};
  Agent a2;
  a2.id = 2;
  SimWorld world({a1, a2}, sim);
  world.submit(1, 2, std::vector<std::uint8_t>(120, 1), 12345);
  world.run_until(1'000'000);
  bool duration_ok = world.transactions().size() == 1;
  std::int64_t measured_us = 0;
  if (duration_ok) {
    measured_us = world.transactions()[0].end_us - world.transactions()[0].start_us;
    duration_ok = measured_us == 46'000 && rpp_duration_ms(120) == 46.0;
  }

  // Saturated rates.
  std::string rates;
  bool rates_ok = true;
  double two_agent_total = 0.0;
  for (int n : {2, 3, 5}) {
    SimConfig thr_sim;
    thr_sim.noise = NoiseModel{};
    thr_sim.seed = 1729;
    const ThroughputResult r = measure_throughput(n, 120, 120.0, thr_sim);
    const double target = 20.0 / (n - 1);
    const double dev = std::abs(r.per_agent_rate - target) / target;
    rates_ok = rates_ok && dev <= 0.10;
    if (n == 2) two_agent_total = r.total_rate;
    rates += fmt("N=%d: %.2f/agent (target %.2f, dev %.1f%%) ", n, r.per_agent_rate, target,
                 100.0 * dev);
  }
  const bool band_ok = two_agent_total >= 19.6 && two_agent_total <= 21.8;

  const bool pass = duration_ok && rates_ok && band_ok;
  report(4, pass, "46 ms minimum transaction and saturated channel rates",
         fmt("min RPP %.3f ms; 2-agent total %.2f in [19.6, 21.8]; %s",
             static_cast<double>(measured_us) / 1000.0, two_agent_total, rates.c_str()));
}

// --- criterion 5: threshold row rejection ----------------------------------

void criterion_5() {
  const AntennaArray array = build_rta(kDefaultSpacing);
  bool pass = true;
  std::string note = "single 170-deg pair drops exactly one row";

  // A single 170-degree pair is removed, and only it; the solve still runs.
  for (int hot = 0; hot < 6 && pass; ++hot) {
    RppObservation obs;
    obs.twr = synth_twr_explicit(3.0, 0, 0, {}, 0, true, nullptr);
    const DirectionMatrix matrix = baseline_matrix(array);
    const Eigen::Vector3d v = oracles::bearing_from_pan_tilt(0.3, 0.2);
    for (int k = 0; k < 6; ++k)
      obs.pair_diffs[k] = wrap_pi(kSpacingFactor * kPi * matrix.rows.row(k).dot(v));
    obs.pair_diffs[hot] = deg_to_rad(170.0);
    const auto diffs = apply_calibration(obs.pair_diffs, {});
    const auto mask = select_rows(diffs);
    for (int k = 0; k < 6; ++k) pass = pass && (mask[k] == (k != hot));
    const AoaResult aoa = estimate_aoa(obs, array, {}, {});
    pass = pass && aoa.rows_used == 5;
  }

  // Exhaustive over all 64 over-threshold masks.
  long checked = 0;
  for (int bits = 0; bits < 64 && pass; ++bits) {
    PhaseDifferenceSet diffs;
    int over = 0;
    for (int k = 0; k < 6; ++k) {
      const bool reject = (bits >> k) & 1;
      diffs.values[k] = reject ? deg_to_rad(170.0) : deg_to_rad(15.0);
      over += reject ? 1 : 0;
    }
    ++checked;
    if (over > 3) {
      try {
        (void)select_rows(diffs);
        pass = false;
        note = "mask with <3 surviving rows did not fail";
      } catch (const InsufficientGeometryError&) {
      }
    } else {
      const auto mask = select_rows(diffs);
      for (int k = 0; k < 6; ++k)
        if (mask[k] != !((bits >> k) & 1)) {
          pass = false;
          note = "rejected set differs from the over-threshold set";
        }
    }
  }
  report(5, pass, "165-degree threshold row rejection",
         fmt("%s; %ld masks checked exhaustively", note.c_str(), checked));
}

// --- criterion 6: protocol properties ---------------------------------------

void criterion_6() {
  bool pass = true;
  std::string detail;

  // CRC check value.
  const std::string check = "123456789";
  const std::vector<std::uint8_t> check_bytes(check.begin(), check.end());
  if (crc16(check_bytes) != 0x29B1) {
    pass = false;
    detail += "crc16 check value mismatch; ";
  }

  // packetize/depacketize identity over 10000 random messages.
  Rng rng(606);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::uint8_t> msg(rng.uniform_index(5001));
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng.bits() & 0xFF);
    if (depacketize(packetize(msg, static_cast<std::uint16_t>(trial))) != msg) {
      pass = false;
      detail += "packetize round trip failed; ";
      break;
    }
  }

  // Exhaustive ordering property to depth 12.
  NodeConfig cfg{.id = 1};
  exhaustive::Enumerator initiator{12};
  initiator.explore(RppTransaction(RppRole::initiator, 7, 1, cfg), -1, 0);
  exhaustive::Enumerator responder{12};
  responder.explore(RppTransaction(RppRole::responder, 7, 2, cfg), -1, 0);
  if (initiator.order_violated || responder.order_violated || initiator.done_paths == 0 ||
      responder.done_paths == 0) {
    pass = false;
    detail += "phase-order enumeration failed; ";
  }

  // CSMA mutual exclusion over full event logs (saturated 3-agent run).
  SimConfig sim;
  sim.noise = NoiseModel{};
  sim.seed = 31;
  const ThroughputResult r = measure_throughput(3, 120, 60.0, sim);
  std::vector<std::pair<std::int64_t, std::int64_t>> intervals;
  for (const auto& t : r.transactions)
    if (t.end_us >= 0 && t.failure != FailureCause::busy)
      intervals.emplace_back(t.start_us, t.end_us);
  std::sort(intervals.begin(), intervals.end());
  long overlaps = 0;
  for (std::size_t i = 1; i < intervals.size(); ++i)
    if (intervals[i].first < intervals[i - 1].second) ++overlaps;
  if (overlaps != 0) {
    pass = false;
    detail += "transaction intervals overlap; ";
  }

  report(6, pass, "packetization identity, CRC check value, phase order, CSMA exclusion",
         detail.empty()
             ? fmt("crc 0x29B1; 10000 round trips; %ld+%ld enumeration paths; %zu "
                   "transactions with no overlap",
                   initiator.paths_explored, responder.paths_explored, intervals.size())
             : detail);
}

// --- criterion 7: covariance scalar properties ------------------------------

void criterion_7() {
  bool pass = true;
  std::string detail;

  TruePose truth;
  truth.p_i = {2.0, 0.0, 0.0};

  // Non-negativity over 10000 random estimate sets.
  Rng rng(707);
  double min_scalar = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<RelativeEstimate> est;
    const int n = 2 + static_cast<int>(rng.uniform_index(8));
    for (int i = 0; i < n; ++i)
      est.push_back(compose_estimate(0.1 + 6.0 * rng.uniform01(), oracles::random_unit_vector(rng)));
    const double scalar = covariance_cell(est, truth).cov_scalar;
    min_scalar = std::min(min_scalar, scalar);
    if (scalar < 0.0) pass = false;
  }
  if (!pass) detail += "negative scalar found; ";

  // Zero for perfect estimates.
  std::vector<RelativeEstimate> perfect(4, compose_estimate(2.0, {1, 0, 0}));
  if (covariance_cell(perfect, truth).cov_scalar != 0.0) {
    pass = false;
    detail += "perfect estimates gave nonzero scalar; ";
  }

  // Hand-computed 2-point oracle.
  TruePose diag_truth;
  diag_truth.p_i = {2.0, 2.0, 2.0};
  std::vector<RelativeEstimate> two;
  two.push_back(compose_estimate(std::sqrt(3.0) * 2.1, Eigen::Vector3d(1, 1, 1).normalized()));
  two.push_back(compose_estimate(std::sqrt(3.0) * 1.9, Eigen::Vector3d(1, 1, 1).normalized()));
  const double got = covariance_cell(two, diag_truth).cov_scalar;
  const Eigen::Matrix3d expected_m =
      Eigen::Matrix3d::Constant(0.02) +
      Eigen::Matrix3d(Eigen::Vector3d::Constant(0.01).asDiagonal());
  const double expected = expected_m.determinant();
  if (std::abs(got - expected) > 1e-12) {
    pass = false;
    detail += fmt("2-point oracle: got %.15g expected %.15g; ", got, expected);
  }

  report(7, pass, "covariance scalar: non-negative, zero at truth, matches the 2-point oracle",
         detail.empty() ? fmt("min scalar %.3e over 10000 random sets; oracle diff %.2e",
                              min_scalar, std::abs(got - expected))
                        : detail);
}

// --- criterion 8: bias calibration recovery ---------------------------------

void criterion_8() {
  const AntennaArray array = build_rta(kDefaultSpacing);
  NoiseModel noise;
  noise.phase_sigma0 = 0.05;
  noise.bias_true = {0.5, -0.5, 0.3, -0.2, 0.45, -0.35};
  noise.quantize_timestamps = false;

  Rng rng(808);
  std::vector<CalibrationSample> samples;
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d dir = oracles::random_unit_vector(rng);
    TruePose pose;
    pose.p_i = 2.0 * dir;
    const RppObservation obs = synth_observation(array, pose, noise, rng);
    samples.push_back({dir, obs.pair_diffs});
  }
  const CalibrationTable table = calibrate_bias(samples, array);
  double worst = 0.0;
  for (int k = 0; k < 6; ++k)
    worst = std::max(worst, std::abs(table.pair_biases[k] - noise.bias_true[k]));
  const bool pass = worst <= 0.01;
  report(8, pass, "per-pair biases up to 0.5 rad recovered from 500 noisy samples",
         fmt("max recovery error %.4f rad (<= 0.01)", worst));
}

// --- criterion 9: seeded determinism of CLI outputs -------------------------

void criterion_9() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "tetraloc_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string cfg_path = (base / "run.conf").string();
  write_text_file(cfg_path,
                  "grid.pan_step_deg = 45\n"
                  "grid.tilt_step_deg = 45\n"
                  "grid.range_max_m = 3.5\n"
                  "grid.readings_per_cell = 10\n"
                  "trajectory.duration_s = 5\n"
                  "trajectory.rpp_rate_hz = 5\n");

  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  bool pass = true;
  std::string detail;
  for (const char* sub_name : {"covmap", "trajectory"}) {
    const std::string sub(sub_name);
    const auto a = (base / (sub + "_a")).string();
    const auto b = (base / (sub + "_b")).string();
    if (run_cli({"--config", cfg_path, "--seed", "99", "--out", a, sub}) != 0 ||
        run_cli({"--config", cfg_path, "--seed", "99", "--out", b, sub}) != 0) {
      pass = false;
      detail += sub + " run failed; ";
      continue;
    }
    const std::string name = sub == "covmap" ? "covmap.csv" : "trajectory.csv";
    const std::string bytes_a = read(fs::path(a) / name);
    if (bytes_a.empty() || bytes_a != read(fs::path(b) / name)) {
      pass = false;
      detail += sub + " CSVs differ; ";
    }
  }
  fs::remove_all(base);
  report(9, pass, "identical seeds give byte-identical CSV outputs",
         detail.empty() ? "covmap.csv and trajectory.csv identical across reruns" : detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  if (g_failures == 0)
    std::printf("acceptance: all 9 criteria passed\n");
  else
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return g_failures;
}
