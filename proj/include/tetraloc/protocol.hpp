#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tetraloc/errors.hpp"
#include "tetraloc/rng.hpp"

namespace tetraloc {

// 802.15.4A-style payload budget: 127 bytes total, 5 header + 2 CRC leaves
// 120 bytes of payload per frame.
inline constexpr std::size_t kMaxPayload = 120;
inline constexpr std::size_t kHeaderBytes = 5;
inline constexpr std::size_t kCrcBytes = 2;
inline constexpr std::size_t kMaxFrameBytes = kHeaderBytes + kMaxPayload + kCrcBytes;  // 127
inline constexpr std::size_t kMaxFramesPerMessage = 1u << 16;  // 2-byte sequence field

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection or xorout.
/// Check value: crc16("123456789") == 0x29B1.
inline std::uint16_t crc16(std::span<const std::uint8_t> data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte) << 8;
    for (int bit = 0; bit < 8; ++bit)
      crc = static_cast<std::uint16_t>((crc & 0x8000) ? (crc << 1) ^ 0x1021 : (crc << 1));
  }
  return crc;
}

enum class FrameType : std::uint8_t {
  msg_init = 0x01,
  init_ack = 0x02,
  msg_data = 0x03,
  data_ack = 0x04,
  rng_poll = 0x05,
  rng_resp = 0x06,
  rng_final = 0x07,
  bearing_ping = 0x08,
};

/// One over-the-air frame: 5-byte header (type, transaction id, sequence),
/// up to 120 payload bytes, 2-byte CRC over header+payload. Multi-byte fields
/// are big-endian.
struct Frame {
  FrameType type = FrameType::msg_data;
  std::uint16_t transaction_id = 0;
  std::uint16_t sequence = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

inline std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload)
    throw InvalidParameterError("frame payload exceeds 120 bytes");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kHeaderBytes + frame.payload.size() + kCrcBytes);
  bytes.push_back(static_cast<std::uint8_t>(frame.type));
  bytes.push_back(static_cast<std::uint8_t>(frame.transaction_id >> 8));
  bytes.push_back(static_cast<std::uint8_t>(frame.transaction_id & 0xFF));
  bytes.push_back(static_cast<std::uint8_t>(frame.sequence >> 8));
  bytes.push_back(static_cast<std::uint8_t>(frame.sequence & 0xFF));
  bytes.insert(bytes.end(), frame.payload.begin(), frame.payload.end());
  const std::uint16_t crc = crc16(bytes);
  bytes.push_back(static_cast<std::uint8_t>(crc >> 8));
  bytes.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  return bytes;
}

inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + kCrcBytes || bytes.size() > kMaxFrameBytes)
    throw InvalidParameterError("frame length out of range");
  const std::uint16_t stored =
      static_cast<std::uint16_t>((bytes[bytes.size() - 2] << 8) | bytes[bytes.size() - 1]);
  if (crc16(bytes.first(bytes.size() - kCrcBytes)) != stored)
    throw CrcError("frame CRC mismatch");
  Frame frame;
  frame.type = static_cast<FrameType>(bytes[0]);
  frame.transaction_id = static_cast<std::uint16_t>((bytes[1] << 8) | bytes[2]);
  frame.sequence = static_cast<std::uint16_t>((bytes[3] << 8) | bytes[4]);
  frame.payload.assign(bytes.begin() + kHeaderBytes, bytes.end() - kCrcBytes);
  return frame;
}

inline std::string frame_to_hex(const Frame& frame) {
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (std::uint8_t b : encode_frame(frame)) {
    hex.push_back(digits[b >> 4]);
    hex.push_back(digits[b & 0xF]);
  }
  return hex;
}

/// Splits a message into msg_data frames of up to 120 bytes. A zero-length
/// message still produces one (empty) frame.
inline std::vector<Frame> packetize(std::span<const std::uint8_t> message,
                                    std::uint16_t transaction_id) {
  const std::size_t count = message.empty() ? 1 : (message.size() + kMaxPayload - 1) / kMaxPayload;
  if (count > kMaxFramesPerMessage)
    throw MessageTooLongError("message needs " + std::to_string(count) +
                              " frames; sequence space allows 65536");
  std::vector<Frame> frames;
  frames.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Frame frame;
    frame.type = FrameType::msg_data;
    frame.transaction_id = transaction_id;
    frame.sequence = static_cast<std::uint16_t>(k);
    const std::size_t begin = k * kMaxPayload;
    const std::size_t end = std::min(message.size(), begin + kMaxPayload);
    frame.payload.assign(message.begin() + static_cast<std::ptrdiff_t>(begin),
                         message.begin() + static_cast<std::ptrdiff_t>(end));
    frames.push_back(std::move(frame));
  }
  return frames;
}

/// Reassembles a message from contiguous data frames of one transaction.
inline std::vector<std::uint8_t> depacketize(std::span<const Frame> frames) {
  if (frames.empty()) throw MissingFrameError("no frames");
  std::vector<std::uint8_t> message;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame& frame = frames[k];
    if (frame.transaction_id != frames[0].transaction_id)
      throw MissingFrameError("mixed transaction ids");
    if (frame.sequence != k)
      throw MissingFrameError("expected sequence " + std::to_string(k) + ", got " +
                              std::to_string(frame.sequence));
    if (k + 1 < frames.size() && frame.payload.size() != kMaxPayload)
      throw MissingFrameError("non-final frame with short payload");
    message.insert(message.end(), frame.payload.begin(), frame.payload.end());
  }
  return message;
}

// ---------------------------------------------------------------------------
// RPP transaction state machine
// ---------------------------------------------------------------------------

enum class RppPhase { idle, await_init_ack, message, ranging, bearing, done, failed };
enum class RppRole { initiator, responder };
enum class FailureCause {
  none,
  timeout,
  crc,
  insufficient_rows,
  rank_deficient,
  busy,
  protocol_violation,
  ranging,
};

inline const char* to_string(RppPhase p) {
  switch (p) {
    case RppPhase::idle: return "idle";
    case RppPhase::await_init_ack: return "await_init_ack";
    case RppPhase::message: return "message";
    case RppPhase::ranging: return "ranging";
    case RppPhase::bearing: return "bearing";
    case RppPhase::done: return "done";
    case RppPhase::failed: return "failed";
  }
  return "?";
}

inline const char* to_string(FailureCause c) {
  switch (c) {
    case FailureCause::none: return "none";
    case FailureCause::timeout: return "timeout";
    case FailureCause::crc: return "crc";
    case FailureCause::insufficient_rows: return "insufficient_rows";
    case FailureCause::rank_deficient: return "rank_deficient";
    case FailureCause::busy: return "busy";
    case FailureCause::protocol_violation: return "protocol_violation";
    case FailureCause::ranging: return "ranging";
  }
  return "?";
}

/// Per-phase slot lengths of one transaction, microseconds of simulated time.
/// The defaults split the 46 ms minimum transaction: 4 init + 6 per data
/// frame + 18 ranging + 12 bearing + 6 compute.
struct PhaseDurations {
  std::int64_t init_us = 4000;
  std::int64_t per_frame_us = 6000;
  std::int64_t ranging_us = 18000;
  std::int64_t bearing_us = 12000;
  std::int64_t compute_us = 6000;
};

struct NodeConfig {
  int id = 0;
  PhaseDurations durations{};
  std::int64_t backoff_min_us = 5000;
  std::int64_t backoff_max_us = 25000;
  std::int64_t timeout_us = 10000;  // slack beyond the expected arrival
  int max_backoffs = 1000000;

  void validate() const {
    if (!(backoff_min_us > 0) || backoff_min_us > backoff_max_us)
      throw InvalidParameterError("need 0 < backoff_min <= backoff_max");
    if (durations.init_us <= 0 || durations.per_frame_us <= 0 || durations.ranging_us <= 0 ||
        durations.bearing_us <= 0 || durations.compute_us <= 0 || timeout_us <= 0)
      throw InvalidParameterError("phase durations must be positive");
  }
};

/// Wall duration of a full transaction carrying `msg_len` bytes, milliseconds:
/// one frame rides inside the 46 ms minimum, each additional frame adds one
/// message slot.
inline double rpp_duration_ms(std::size_t msg_len, const NodeConfig& cfg = {}) {
  const std::size_t frames = msg_len == 0 ? 1 : (msg_len + kMaxPayload - 1) / kMaxPayload;
  const auto& d = cfg.durations;
  const std::int64_t us = d.init_us + static_cast<std::int64_t>(frames) * d.per_frame_us +
                          d.ranging_us + d.bearing_us + d.compute_us;
  return static_cast<double>(us) / 1000.0;
}

inline std::int64_t rpp_duration_us(std::size_t frame_count, const PhaseDurations& d) {
  return d.init_us + static_cast<std::int64_t>(frame_count) * d.per_frame_us + d.ranging_us +
         d.bearing_us + d.compute_us;
}

// Events fed to the state machine by the event loop.
struct RppEvent {
  enum class Kind { host_send, frame_rx, frame_corrupt, timer };
  Kind kind = Kind::timer;
  Frame frame{};                      // frame_rx
  int peer = -1;                      // host_send: target node id
  std::vector<std::uint8_t> message;  // host_send: payload to transfer
  int timer_id = 0;                   // timer
};

// Actions emitted by one step; the event loop realizes them.
struct RppAction {
  enum class Kind {
    send_frame,       // transmit `frame` at time `at_us`
    set_timer,        // fire timer `timer_id` at `at_us`
    capture_ranging,  // attach DS-TWR measurements to this transaction
    capture_bearing,  // attach the 4-antenna observation
    deliver_to_host,  // responder done: message + localization in one delivery
  };
  Kind kind;
  Frame frame{};
  std::int64_t at_us = 0;
  int timer_id = 0;
};

/// One transaction's state machine. Pure: stepping never performs I/O;
/// effects come back as actions. Illegal events push the machine to
/// failed(protocol_violation); timer expiry to failed(timeout); a corrupted
/// frame to failed(crc).
class RppTransaction {
 public:
  RppTransaction(RppRole role, std::uint16_t txn_id, int self_id, NodeConfig cfg)
      : role_(role), txn_id_(txn_id), self_id_(self_id), cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  RppPhase phase() const { return phase_; }
  RppRole role() const { return role_; }
  FailureCause failure_cause() const { return failure_; }
  std::uint16_t txn_id() const { return txn_id_; }
  int peer() const { return peer_; }
  bool terminal() const { return phase_ == RppPhase::done || phase_ == RppPhase::failed; }
  std::size_t frame_count() const { return data_frames_.size(); }
  std::uint16_t expected_data_seq() const { return next_seq_; }
  const std::vector<std::uint8_t>& reassembled_message() const { return message_; }
  const std::vector<RppPhase>& phase_history() const { return history_; }

  std::vector<RppAction> step(const RppEvent& event, std::int64_t now_us) {
    std::vector<RppAction> actions;
    if (terminal()) return actions;
    switch (event.kind) {
      case RppEvent::Kind::host_send:
        on_host_send(event, now_us, actions);
        break;
      case RppEvent::Kind::frame_rx:
        on_frame(event.frame, now_us, actions);
        break;
      case RppEvent::Kind::frame_corrupt:
        fail(FailureCause::crc);
        break;
      case RppEvent::Kind::timer:
        if (event.timer_id == live_timer_) {
          if (pending_done_) {
            enter(RppPhase::done);
            if (role_ == RppRole::responder) {
              RppAction deliver;
              deliver.kind = RppAction::Kind::deliver_to_host;
              actions.push_back(deliver);
            }
          } else {
            fail(FailureCause::timeout);
          }
        }
        break;
    }
    return actions;
  }

  // The simulator records estimator failures on the transaction.
  void mark_estimator_failure(FailureCause cause) {
    phase_ = RppPhase::failed;
    failure_ = cause;
  }

 private:
  void enter(RppPhase next) {
    phase_ = next;
    history_.push_back(next);
  }

  void fail(FailureCause cause) {
    failure_ = cause;
    enter(RppPhase::failed);
  }

  void send(std::vector<RppAction>& actions, Frame frame, std::int64_t at_us) {
    RppAction a;
    a.kind = RppAction::Kind::send_frame;
    a.frame = std::move(frame);
    a.at_us = at_us;
    actions.push_back(std::move(a));
  }

  void arm_timer(std::vector<RppAction>& actions, std::int64_t at_us, bool is_done_timer) {
    RppAction a;
    a.kind = RppAction::Kind::set_timer;
    a.timer_id = ++timer_counter_;
    a.at_us = at_us;
    live_timer_ = a.timer_id;
    pending_done_ = is_done_timer;
    actions.push_back(a);
  }

  Frame make(FrameType type, std::uint16_t seq = 0, std::vector<std::uint8_t> payload = {}) const {
    Frame f;
    f.type = type;
    f.transaction_id = txn_id_;
    f.sequence = seq;
    f.payload = std::move(payload);
    return f;
  }

  void on_host_send(const RppEvent& event, std::int64_t now_us, std::vector<RppAction>& actions) {
    if (role_ != RppRole::initiator || phase_ != RppPhase::idle) {
      fail(FailureCause::protocol_violation);
      return;
    }
    peer_ = event.peer;
    data_frames_ = packetize(event.message, txn_id_);

    // init payload: src(2) dst(2) frame_count(2), big-endian.
    std::vector<std::uint8_t> p(6);
    p[0] = static_cast<std::uint8_t>(self_id_ >> 8);
    p[1] = static_cast<std::uint8_t>(self_id_ & 0xFF);
    p[2] = static_cast<std::uint8_t>(event.peer >> 8);
    p[3] = static_cast<std::uint8_t>(event.peer & 0xFF);
    const auto count = static_cast<std::uint16_t>(data_frames_.size());
    p[4] = static_cast<std::uint8_t>(count >> 8);
    p[5] = static_cast<std::uint8_t>(count & 0xFF);

    enter(RppPhase::await_init_ack);
    send(actions, make(FrameType::msg_init, 0, std::move(p)), now_us);
    arm_timer(actions, now_us + cfg_.durations.init_us + cfg_.timeout_us, false);
  }

  void on_frame(const Frame& frame, std::int64_t now_us, std::vector<RppAction>& actions) {
    const auto& d = cfg_.durations;
    switch (phase_) {
      case RppPhase::await_init_ack:
        if (role_ == RppRole::initiator && frame.type == FrameType::init_ack) {
          enter(RppPhase::message);
          next_seq_ = 0;
          send(actions, data_frames_[0], now_us);
          arm_timer(actions, now_us + d.per_frame_us + cfg_.timeout_us, false);
          return;
        }
        break;

      case RppPhase::idle:
        if (role_ == RppRole::responder && frame.type == FrameType::msg_init &&
            frame.payload.size() == 6) {
          peer_ = (frame.payload[0] << 8) | frame.payload[1];
          expected_frames_ = static_cast<std::size_t>((frame.payload[4] << 8) | frame.payload[5]);
          enter(RppPhase::message);
          next_seq_ = 0;
          send(actions, make(FrameType::init_ack), now_us + d.init_us);
          arm_timer(actions, now_us + d.init_us + d.per_frame_us + cfg_.timeout_us, false);
          return;
        }
        break;

      case RppPhase::message:
        if (role_ == RppRole::initiator && frame.type == FrameType::data_ack &&
            frame.sequence == next_seq_) {
          ++next_seq_;
          if (next_seq_ < data_frames_.size()) {
            send(actions, data_frames_[next_seq_], now_us);
            arm_timer(actions, now_us + d.per_frame_us + cfg_.timeout_us, false);
          } else {
            enter(RppPhase::ranging);
            send(actions, make(FrameType::rng_poll), now_us);
            arm_timer(actions, now_us + d.ranging_us + cfg_.timeout_us, false);
          }
          return;
        }
        if (role_ == RppRole::responder && frame.type == FrameType::msg_data &&
            frame.sequence == next_seq_) {
          message_.insert(message_.end(), frame.payload.begin(), frame.payload.end());
          send(actions, make(FrameType::data_ack, frame.sequence), now_us + d.per_frame_us);
          ++next_seq_;
          if (next_seq_ == expected_frames_) {
            enter(RppPhase::ranging);
            arm_timer(actions, now_us + d.per_frame_us + cfg_.timeout_us, false);
          } else {
            arm_timer(actions, now_us + 2 * d.per_frame_us + cfg_.timeout_us, false);
          }
          return;
        }
        break;

      case RppPhase::ranging:
        if (role_ == RppRole::initiator && frame.type == FrameType::rng_resp) {
          // Final goes out one ranging sub-slot after the response.
          send(actions, make(FrameType::rng_final), now_us + d.ranging_us / 3);
          enter(RppPhase::bearing);
          const std::int64_t ranging_end = now_us + 2 * d.ranging_us / 3;
          send(actions, make(FrameType::bearing_ping), ranging_end);
          // Fire-and-forget from here: done when the bearing slot and the
          // responder's compute slot elapse.
          arm_timer(actions, ranging_end + d.bearing_us + d.compute_us, true);
          return;
        }
        if (role_ == RppRole::responder && frame.type == FrameType::rng_poll) {
          send(actions, make(FrameType::rng_resp), now_us + d.ranging_us / 3);
          arm_timer(actions, now_us + d.ranging_us + cfg_.timeout_us, false);
          return;
        }
        if (role_ == RppRole::responder && frame.type == FrameType::rng_final) {
          RppAction capture;
          capture.kind = RppAction::Kind::capture_ranging;
          actions.push_back(capture);
          enter(RppPhase::bearing);
          arm_timer(actions, now_us + d.ranging_us / 3 + d.bearing_us + cfg_.timeout_us, false);
          return;
        }
        break;

      case RppPhase::bearing:
        if (role_ == RppRole::responder && frame.type == FrameType::bearing_ping) {
          RppAction capture;
          capture.kind = RppAction::Kind::capture_bearing;
          actions.push_back(capture);
          arm_timer(actions, now_us + d.bearing_us + d.compute_us, true);
          return;
        }
        break;

      case RppPhase::done:
      case RppPhase::failed:
        return;
    }
    fail(FailureCause::protocol_violation);
  }

  RppRole role_;
  std::uint16_t txn_id_;
  int self_id_;
  NodeConfig cfg_;

  RppPhase phase_ = RppPhase::idle;
  FailureCause failure_ = FailureCause::none;
  std::vector<RppPhase> history_{RppPhase::idle};
  int peer_ = -1;

  std::vector<Frame> data_frames_;   // initiator
  std::vector<std::uint8_t> message_;  // responder reassembly
  std::size_t expected_frames_ = 0;
  std::uint16_t next_seq_ = 0;

  int timer_counter_ = 0;
  int live_timer_ = -1;
  bool pending_done_ = false;
};

/// Carrier-sense decision: transmit only from a fully idle node, otherwise
/// back off a uniform random time and re-check.
struct CsmaDecision {
  bool send_now = false;
  std::int64_t backoff_us = 0;
};

inline CsmaDecision csma_try_send(RppPhase node_phase, Rng& rng, const NodeConfig& cfg) {
  if (node_phase == RppPhase::idle) return {true, 0};
  const double span = static_cast<double>(cfg.backoff_max_us - cfg.backoff_min_us);
  const auto backoff = cfg.backoff_min_us + static_cast<std::int64_t>(std::llround(rng.uniform01() * span));
  return {false, backoff};
}

}  // namespace tetraloc
