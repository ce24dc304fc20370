#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "tetraloc/channel.hpp"
#include "tetraloc/estimator.hpp"
#include "tetraloc/geometry.hpp"
#include "tetraloc/protocol.hpp"
#include "tetraloc/rng.hpp"

namespace tetraloc {

/// Agent motion, planar in world x-z (the y axis is "up", matching the
/// antenna body frame with identity orientation).
struct Trajectory {
  enum class Kind { fixed, circular, curved_forward };
  Kind kind = Kind::fixed;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();   // fixed position / arc start
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // circular
  double radius = 1.0;
  double angular_rate = 0.0;  // rad/s
  double heading = 0.0;       // rad, from +x toward +z
  double curvature = 0.0;     // 1/m, 0 = straight
  double speed = 0.0;         // m/s

  Eigen::Vector3d position(double t_s) const {
    switch (kind) {
      case Kind::fixed:
        return start;
      case Kind::circular: {
        const double a = angular_rate * t_s;
        return center + radius * Eigen::Vector3d(std::cos(a), 0.0, std::sin(a));
      }
      case Kind::curved_forward: {
        const double s = speed * t_s;
        if (std::abs(curvature) < 1e-9)
          return start + s * Eigen::Vector3d(std::cos(heading), 0.0, std::sin(heading));
        const double theta = heading + curvature * s;
        return start + (1.0 / curvature) *
                           Eigen::Vector3d(std::sin(theta) - std::sin(heading), 0.0,
                                           std::cos(heading) - std::cos(theta));
      }
    }
    return start;
  }
};

struct Agent {
  int id = 0;
  Trajectory trajectory{};
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();  // world -> body
};

/// One host-visible ping outcome logged by the receiving node.
struct PingRecord {
  std::int64_t t_us = 0;
  int tx_id = 0;
  int rx_id = 0;
  bool ok = false;
  FailureCause cause = FailureCause::none;
  RelativeEstimate estimate{};
  Eigen::Vector3d truth_q = Eigen::Vector3d::Zero();
  std::size_t message_bytes = 0;
};

struct TransactionRecord {
  std::uint16_t txn_id = 0;
  int initiator = -1;
  int responder = -1;
  std::int64_t start_us = 0;
  std::int64_t end_us = -1;  // max of both sides' terminal times
  bool responder_done = false;
  FailureCause failure = FailureCause::none;
  std::size_t msg_len = 0;
};

struct SimConfig {
  AntennaArray array = build_rta(kDefaultSpacing);
  NoiseModel noise{};
  EstimatorConfig estimator{};
  CalibrationTable calibration{};
  NodeConfig node{};
  double wavelength = kDefaultWavelength;
  std::uint64_t seed = kDefaultSeed;
  std::int64_t csma_jitter_us = 6000;  // re-check spread after a tracked busy window
  bool record_frames = false;
};

/// Discrete-event world: integer-microsecond timeline, broadcast frame
/// deliveries at zero propagation delay, per-node protocol state machines,
/// channel synthesis at the ranging/bearing capture points. Event order is
/// the total order (time, priority, node, insertion sequence) with frame
/// deliveries before timers before carrier-sense checks, which makes runs
/// with equal seeds bit-identical.
class SimWorld {
 public:
  SimWorld(const std::vector<Agent>& agents, SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.node.validate();
    cfg_.noise.validate();
    for (const Agent& a : agents) {
      Node n;
      n.agent = a;
      n.cfg = cfg_.node;
      n.cfg.id = a.id;
      const std::string tag = "node/" + std::to_string(a.id);
      n.backoff_rng = std::make_unique<Rng>(substream_seed(cfg_.seed, tag + "/backoff"));
      if (cfg_.noise.clock_drift_ppm > 0) {
        Rng clock(substream_seed(cfg_.seed, tag + "/clock"));
        n.drift_ppm = clock.uniform(-cfg_.noise.clock_drift_ppm, cfg_.noise.clock_drift_ppm);
      }
      nodes_.push_back(std::move(n));
    }
  }

  // --- experiment drivers -------------------------------------------------

  /// Queue a single host message from `from` to `to` at time `t_us`.
  void submit(int from, int to, std::vector<std::uint8_t> message, std::int64_t t_us) {
    Event e;
    e.kind = Event::Kind::host_request;
    e.t_us = t_us;
    e.node = from;
    e.target = to;
    e.message = std::move(message);
    push(e);
  }

  /// Saturating sender: re-submits a fresh message as soon as the previous
  /// transaction ends (plus a small random re-check jitter).
  void saturate(int from, int to, std::size_t msg_len) {
    node_for(from).saturate_target = to;
    node_for(from).saturate_len = msg_len;
    submit(from, to, make_payload(msg_len), 0);
  }

  void run_until(std::int64_t end_us) {
    while (!queue_.empty()) {
      const Event e = queue_.top();
      if (e.t_us > end_us) break;
      queue_.pop();
      if (e.t_us < now_us_) ++order_violations_;
      now_us_ = e.t_us;
      dispatch(e);
    }
  }

  // --- results ------------------------------------------------------------

  const std::vector<PingRecord>& pings() const { return pings_; }
  const std::vector<TransactionRecord>& transactions() const { return txns_; }
  long order_violations() const { return order_violations_; }
  long dropped_requests() const { return dropped_requests_; }

  std::vector<std::string> frame_trace() const {
    auto sorted = trace_;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    out.reserve(sorted.size());
    for (auto& [t, hex] : sorted) out.push_back(hex);
    return out;
  }

  TruePose pose_for_link(int tx, int rx, std::int64_t t_us) const {
    const double t_s = static_cast<double>(t_us) * 1e-6;
    const Agent& a_tx = node_for(tx).agent;
    const Agent& a_rx = node_for(rx).agent;
    TruePose pose;
    pose.p_i = a_tx.trajectory.position(t_s);
    pose.p_j = a_rx.trajectory.position(t_s);
    pose.R_j = a_rx.orientation;
    return pose;
  }

 private:
  struct Event {
    enum class Kind { frame_deliver, timer, csma_check, host_request };
    std::int64_t t_us = 0;
    int node = 0;
    std::uint64_t seq = 0;
    Kind kind = Kind::timer;
    Frame frame{};
    int timer_id = 0;
    int target = -1;
    std::vector<std::uint8_t> message;

    int priority() const {
      switch (kind) {
        case Kind::frame_deliver: return 0;
        case Kind::timer: return 1;
        default: return 2;
      }
    }
  };

  struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
      return std::tuple(a.t_us, a.priority(), a.node, a.seq) >
             std::tuple(b.t_us, b.priority(), b.node, b.seq);
    }
  };

  struct Node {
    Agent agent{};
    NodeConfig cfg{};
    std::unique_ptr<Rng> backoff_rng;
    double drift_ppm = 0.0;

    std::optional<RppTransaction> txn;
    std::size_t txn_record = 0;
    std::int64_t passive_busy_until = -1;

    bool has_pending = false;
    int pending_target = -1;
    std::vector<std::uint8_t> pending_message;
    int backoff_count = 0;

    int saturate_target = -1;
    std::size_t saturate_len = 0;

    // Captured measurements of the in-flight transaction (responder side).
    bool has_twr = false;
    TwrTimestamps twr{};
    bool has_bearing = false;
    std::array<double, 4> bearing_phases{};
    std::array<double, 6> bearing_diffs{};
    TruePose bearing_truth{};
    std::int64_t bearing_t_us = 0;

    RppPhase effective_phase(std::int64_t now) const {
      if (txn && !txn->terminal()) return txn->phase();
      if (now < passive_busy_until) return RppPhase::message;  // passive reception
      return RppPhase::idle;
    }
  };

  static std::vector<std::uint8_t> make_payload(std::size_t len) {
    std::vector<std::uint8_t> p(len);
    for (std::size_t i = 0; i < len; ++i) p[i] = static_cast<std::uint8_t>(i & 0xFF);
    return p;
  }

  Node& node_for(int id) {
    for (Node& n : nodes_)
      if (n.agent.id == id) return n;
    throw InvalidParameterError("unknown node id " + std::to_string(id));
  }
  const Node& node_for(int id) const {
    for (const Node& n : nodes_)
      if (n.agent.id == id) return n;
    throw InvalidParameterError("unknown node id " + std::to_string(id));
  }

  void push(Event e) {
    e.seq = next_seq_++;
    queue_.push(std::move(e));
  }

  Rng& link_rng(int tx, int rx) {
    const auto key = std::make_pair(tx, rx);
    auto it = link_rngs_.find(key);
    if (it == link_rngs_.end()) {
      const std::string name =
          "link/" + std::to_string(tx) + "->" + std::to_string(rx);
      it = link_rngs_.emplace(key, std::make_unique<Rng>(substream_seed(cfg_.seed, name))).first;
    }
    return *it->second;
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case Event::Kind::frame_deliver:
        on_frame(node_for(e.node), e.frame);
        break;
      case Event::Kind::timer: {
        Node& n = node_for(e.node);
        if (n.txn && !n.txn->terminal()) {
          RppEvent ev;
          ev.kind = RppEvent::Kind::timer;
          ev.timer_id = e.timer_id;
          apply(n, n.txn->step(ev, now_us_));
        }
        break;
      }
      case Event::Kind::host_request: {
        Node& n = node_for(e.node);
        if (n.has_pending) ++dropped_requests_;  // latest ping wins
        n.has_pending = true;
        n.pending_target = e.target;
        n.pending_message = e.message;
        n.backoff_count = 0;
        try_carrier_sense(n);
        break;
      }
      case Event::Kind::csma_check:
        try_carrier_sense(node_for(e.node));
        break;
    }
  }

  void try_carrier_sense(Node& n) {
    if (!n.has_pending) return;
    const RppPhase phase = n.effective_phase(now_us_);
    const CsmaDecision decision = csma_try_send(phase, *n.backoff_rng, n.cfg);
    if (decision.send_now) {
      start_transaction(n);
      return;
    }
    ++n.backoff_count;
    if (n.backoff_count > n.cfg.max_backoffs) {
      TransactionRecord rec;
      rec.initiator = n.agent.id;
      rec.responder = n.pending_target;
      rec.start_us = now_us_;
      rec.end_us = now_us_;
      rec.failure = FailureCause::busy;
      rec.msg_len = n.pending_message.size();
      txns_.push_back(rec);
      n.has_pending = false;
      return;
    }
    Event retry;
    retry.kind = Event::Kind::csma_check;
    retry.node = n.agent.id;
    if (!n.txn && n.passive_busy_until > now_us_) {
      // The tracked transaction's end is known from its init header; re-check
      // just past it with a random spread so contending senders stay fair.
      retry.t_us = n.passive_busy_until +
                   static_cast<std::int64_t>(n.backoff_rng->uniform01() *
                                             static_cast<double>(cfg_.csma_jitter_us));
    } else {
      retry.t_us = now_us_ + decision.backoff_us;
    }
    push(retry);
  }

  void start_transaction(Node& n) {
    const std::uint16_t txn_id = static_cast<std::uint16_t>(next_txn_id_++ & 0xFFFF);
    n.txn.emplace(RppRole::initiator, txn_id, n.agent.id, n.cfg);
    TransactionRecord rec;
    rec.txn_id = txn_id;
    rec.initiator = n.agent.id;
    rec.responder = n.pending_target;
    rec.start_us = now_us_;
    rec.msg_len = n.pending_message.size();
    n.txn_record = txns_.size();
    txns_.push_back(rec);

    RppEvent ev;
    ev.kind = RppEvent::Kind::host_send;
    ev.peer = n.pending_target;
    ev.message = std::move(n.pending_message);
    n.has_pending = false;
    n.pending_message.clear();
    apply(n, n.txn->step(ev, now_us_));
  }

  void on_frame(Node& n, const Frame& frame) {
    if (n.txn && !n.txn->terminal() && frame.transaction_id == n.txn->txn_id()) {
      RppEvent ev;
      ev.kind = RppEvent::Kind::frame_rx;
      ev.frame = frame;
      apply(n, n.txn->step(ev, now_us_));
      return;
    }
    if (frame.type == FrameType::msg_init && frame.payload.size() == 6 &&
        (!n.txn || n.txn->terminal())) {
      const int dst = (frame.payload[2] << 8) | frame.payload[3];
      const std::size_t frames = static_cast<std::size_t>((frame.payload[4] << 8) | frame.payload[5]);
      const std::int64_t busy_until = now_us_ + rpp_duration_us(frames, cfg_.node.durations);
      if (dst == n.agent.id && n.effective_phase(now_us_) == RppPhase::idle) {
        n.txn.emplace(RppRole::responder, frame.transaction_id, n.agent.id, n.cfg);
        n.txn_record = find_record(frame.transaction_id);
        n.has_twr = n.has_bearing = false;
        RppEvent ev;
        ev.kind = RppEvent::Kind::frame_rx;
        ev.frame = frame;
        apply(n, n.txn->step(ev, now_us_));
      } else {
        // Passive reception: the node is occupied for the whole transaction.
        n.passive_busy_until = std::max(n.passive_busy_until, busy_until);
      }
    }
  }

  std::size_t find_record(std::uint16_t txn_id) {
    for (std::size_t i = txns_.size(); i-- > 0;)
      if (txns_[i].txn_id == txn_id) return i;
    return txns_.size() - 1;
  }

  void apply(Node& n, const std::vector<RppAction>& actions) {
    for (const RppAction& a : actions) {
      switch (a.kind) {
        case RppAction::Kind::send_frame: {
          for (Node& other : nodes_) {
            if (other.agent.id == n.agent.id) continue;
            Event e;
            e.kind = Event::Kind::frame_deliver;
            e.t_us = a.at_us;
            e.node = other.agent.id;
            e.frame = a.frame;
            push(e);
          }
          if (cfg_.record_frames) trace_.emplace_back(a.at_us, frame_to_hex(a.frame));
          break;
        }
        case RppAction::Kind::set_timer: {
          Event e;
          e.kind = Event::Kind::timer;
          e.t_us = a.at_us;
          e.node = n.agent.id;
          e.timer_id = a.timer_id;
          push(e);
          break;
        }
        case RppAction::Kind::capture_ranging: {
          const int tx = n.txn->peer();
          const TruePose pose = pose_for_link(tx, n.agent.id, now_us_);
          const double reply_s =
              static_cast<double>(cfg_.node.durations.ranging_us / 3) * 1e-6;
          n.twr = synth_twr_explicit(pose.range(), node_for(tx).drift_ppm, n.drift_ppm,
                                     {reply_s, reply_s}, cfg_.noise.range_sigma,
                                     cfg_.noise.quantize_timestamps, &link_rng(tx, n.agent.id),
                                     cfg_.noise.tick_seconds);
          n.has_twr = true;
          break;
        }
        case RppAction::Kind::capture_bearing: {
          const int tx = n.txn->peer();
          const TruePose pose = pose_for_link(tx, n.agent.id, now_us_);
          Rng& rng = link_rng(tx, n.agent.id);
          n.bearing_phases =
              synth_phases(cfg_.array, true_bearing(pose), cfg_.noise, rng, cfg_.wavelength);
          const auto raw = pair_differences(n.bearing_phases);
          for (int k = 0; k < 6; ++k)
            n.bearing_diffs[k] = wrap_pi(raw[k] - cfg_.noise.bias_true[k]);
          n.bearing_truth = pose;
          n.bearing_t_us = now_us_;
          n.has_bearing = true;
          break;
        }
        case RppAction::Kind::deliver_to_host:
          deliver(n);
          break;
      }
    }
    if (n.txn && n.txn->terminal()) finish_transaction(n);
  }

  void deliver(Node& n) {
    PingRecord ping;
    ping.t_us = now_us_;
    ping.tx_id = n.txn->peer();
    ping.rx_id = n.agent.id;
    ping.message_bytes = n.txn->reassembled_message().size();
    ping.truth_q = n.bearing_truth.relative_position();

    if (!n.has_twr || !n.has_bearing) {
      ping.cause = FailureCause::protocol_violation;
      n.txn->mark_estimator_failure(FailureCause::protocol_violation);
      pings_.push_back(ping);
      return;
    }

    RppObservation obs;
    obs.phases = n.bearing_phases;
    obs.pair_diffs = n.bearing_diffs;
    obs.twr = n.twr;
    obs.truth = n.bearing_truth;
    try {
      ping.estimate =
          estimate_relative(obs, cfg_.array, cfg_.calibration, cfg_.estimator,
                            cfg_.noise.tick_seconds);
      ping.ok = true;
    } catch (const InsufficientGeometryError&) {
      ping.cause = FailureCause::insufficient_rows;
    } catch (const DegenerateGeometryError&) {
      ping.cause = FailureCause::rank_deficient;
    } catch (const AmbiguousBearingError&) {
      ping.cause = FailureCause::rank_deficient;
    } catch (const RangingFailureError&) {
      ping.cause = FailureCause::ranging;
    }
    if (!ping.ok) n.txn->mark_estimator_failure(ping.cause);
    pings_.push_back(ping);
  }

  void finish_transaction(Node& n) {
    TransactionRecord& rec = txns_[n.txn_record];
    rec.end_us = std::max(rec.end_us, now_us_);
    if (n.txn->role() == RppRole::responder) {
      rec.responder_done = n.txn->phase() == RppPhase::done;
      if (n.txn->phase() == RppPhase::failed) rec.failure = n.txn->failure_cause();
    } else if (n.txn->phase() == RppPhase::failed && rec.failure == FailureCause::none) {
      rec.failure = n.txn->failure_cause();
    }
    n.txn.reset();
    n.has_twr = n.has_bearing = false;
    if (n.saturate_target >= 0) {
      Event e;
      e.kind = Event::Kind::host_request;
      e.t_us = now_us_ + static_cast<std::int64_t>(n.backoff_rng->uniform01() *
                                                   static_cast<double>(cfg_.csma_jitter_us));
      e.node = n.agent.id;
      e.target = n.saturate_target;
      e.message = make_payload(n.saturate_len);
      push(e);
    }
  }

  SimConfig cfg_;
  std::vector<Node> nodes_;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::map<std::pair<int, int>, std::unique_ptr<Rng>> link_rngs_;
  std::uint64_t next_seq_ = 0;
  std::uint32_t next_txn_id_ = 1;
  std::int64_t now_us_ = 0;
  long order_violations_ = 0;
  long dropped_requests_ = 0;
  std::vector<PingRecord> pings_;
  std::vector<TransactionRecord> txns_;
  std::vector<std::pair<std::int64_t, std::string>> trace_;
};

}  // namespace tetraloc
