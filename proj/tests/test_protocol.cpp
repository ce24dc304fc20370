#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <tuple>

#include "support/exhaustive.hpp"
#include "support/oracles.hpp"
#include "tetraloc/protocol.hpp"
#include "tetraloc/rng.hpp"

using namespace tetraloc;

namespace {

std::vector<std::uint8_t> random_bytes(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> bytes(n);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.bits() & 0xFF);
  return bytes;
}

}  // namespace

TEST_CASE("crc16 check values") {
  const std::string check = "123456789";
  std::vector<std::uint8_t> bytes(check.begin(), check.end());
  REQUIRE(crc16(bytes) == 0x29B1);
  REQUIRE(crc16(std::span<const std::uint8_t>{}) == 0xFFFF);
}

TEST_CASE("crc16 agrees with an independent table implementation") {
  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const auto bytes = random_bytes(rng, rng.uniform_index(300));
    REQUIRE(crc16(bytes) == oracles::crc16_table_oracle(bytes));
  }
}

TEST_CASE("crc16 detects single-bit flips") {
  Rng rng(55);
  for (int trial = 0; trial < 10000; ++trial) {
    auto bytes = random_bytes(rng, 1 + rng.uniform_index(127));
    const std::uint16_t clean = crc16(bytes);
    const std::size_t byte_idx = rng.uniform_index(bytes.size());
    const int bit_idx = static_cast<int>(rng.uniform_index(8));
    bytes[byte_idx] ^= static_cast<std::uint8_t>(1u << bit_idx);
    REQUIRE(crc16(bytes) != clean);
  }
}

TEST_CASE("frame encoding layout") {
  Frame frame;
  frame.type = FrameType::msg_data;
  frame.transaction_id = 0xBEEF;
  frame.sequence = 0x0102;
  frame.payload = {0xDE, 0xAD};
  const auto bytes = encode_frame(frame);
  REQUIRE(bytes.size() == 9);
  REQUIRE(bytes[0] == 0x03);
  REQUIRE(bytes[1] == 0xBE);  // big-endian transaction id
  REQUIRE(bytes[2] == 0xEF);
  REQUIRE(bytes[3] == 0x01);  // big-endian sequence
  REQUIRE(bytes[4] == 0x02);
  REQUIRE(bytes[5] == 0xDE);
  REQUIRE(bytes[6] == 0xAD);
  const std::uint16_t crc = crc16(std::span(bytes).first(7));
  REQUIRE(bytes[7] == (crc >> 8));
  REQUIRE(bytes[8] == (crc & 0xFF));

  REQUIRE(decode_frame(bytes) == frame);

  Frame big;
  big.payload.assign(121, 0);
  REQUIRE_THROWS_AS(encode_frame(big), InvalidParameterError);
}

TEST_CASE("decode rejects corrupted frames") {
  Frame frame;
  frame.payload = {1, 2, 3, 4, 5};
  auto bytes = encode_frame(frame);
  bytes[6] ^= 0x10;
  REQUIRE_THROWS_AS(decode_frame(bytes), CrcError);
}

TEST_CASE("packetize frame counts and payload split") {
  Rng rng(9);
  SECTION("120 bytes fit one frame") {
    const auto frames = packetize(random_bytes(rng, 120), 7);
    REQUIRE(frames.size() == 1);
    REQUIRE(frames[0].payload.size() == 120);
    REQUIRE(frames[0].sequence == 0);
  }
  SECTION("empty message still sends one frame") {
    const auto frames = packetize(std::span<const std::uint8_t>{}, 7);
    REQUIRE(frames.size() == 1);
    REQUIRE(frames[0].payload.empty());
  }
  SECTION("250 bytes split 120/120/10") {
    const auto frames = packetize(random_bytes(rng, 250), 7);
    REQUIRE(frames.size() == 3);
    REQUIRE(frames[0].payload.size() == 120);
    REQUIRE(frames[1].payload.size() == 120);
    REQUIRE(frames[2].payload.size() == 10);
    for (std::size_t k = 0; k < frames.size(); ++k) REQUIRE(frames[k].sequence == k);
  }
  SECTION("sequence space bounds the message size") {
    std::vector<std::uint8_t> huge(kMaxFramesPerMessage * kMaxPayload + 1, 0);
    REQUIRE_THROWS_AS(packetize(huge, 7), MessageTooLongError);
    huge.pop_back();
    REQUIRE_NOTHROW(packetize(huge, 7));
  }
}

TEST_CASE("depacketize inverts packetize") {
  Rng rng(31);
  SECTION("single round trip") {
    const auto msg = random_bytes(rng, 250);
    REQUIRE(depacketize(packetize(msg, 3)) == msg);
  }
  SECTION("property: identity for 1000 random messages") {
    for (int trial = 0; trial < 1000; ++trial) {
      const auto msg = random_bytes(rng, rng.uniform_index(5001));
      REQUIRE(depacketize(packetize(msg, static_cast<std::uint16_t>(trial))) == msg);
    }
  }
  SECTION("missing frame detected") {
    auto frames = packetize(random_bytes(rng, 300), 3);
    frames.erase(frames.begin() + 1);
    REQUIRE_THROWS_AS(depacketize(frames), MissingFrameError);
  }
  SECTION("transaction mixing detected") {
    auto frames = packetize(random_bytes(rng, 300), 3);
    frames[2].transaction_id = 4;
    REQUIRE_THROWS_AS(depacketize(frames), MissingFrameError);
  }
  SECTION("bit flip caught by the frame CRC") {
    const auto frames = packetize(random_bytes(rng, 64), 3);
    auto bytes = encode_frame(frames[0]);
    bytes[8] ^= 0x01;
    REQUIRE_THROWS_AS(decode_frame(bytes), CrcError);
  }
}

TEST_CASE("rpp_duration") {
  REQUIRE(rpp_duration_ms(120) == 46.0);
  REQUIRE(rpp_duration_ms(0) == 46.0);
  REQUIRE(rpp_duration_ms(1) == 46.0);
  REQUIRE(rpp_duration_ms(360) == 58.0);  // 46 + 2 extra frames
  REQUIRE(rpp_duration_ms(121) > 46.0);
}

namespace {

// Drives initiator and responder machines through one clean transaction,
// relaying frames and firing timers in time order; returns the deliver action
// times. Mirrors the simulator loop but stays protocol-only.
struct TwoNodeHarness {
  NodeConfig cfg_a{.id = 1};
  NodeConfig cfg_b{.id = 2};
  RppTransaction initiator{RppRole::initiator, 42, 1, cfg_a};
  RppTransaction responder{RppRole::responder, 42, 2, cfg_b};
  std::int64_t now = 0;

  struct Pending {
    std::int64_t at;
    int to;  // 1 = initiator, 2 = responder
    bool is_timer = false;
    int timer_id = 0;
    Frame frame{};
    std::uint64_t order = 0;
  };
  std::vector<Pending> queue;
  std::uint64_t next_order = 0;
  std::int64_t initiator_done_at = -1;
  std::int64_t responder_done_at = -1;
  bool captured_ranging = false;
  bool captured_bearing = false;
  bool delivered = false;

  void push_actions(int from, const std::vector<RppAction>& actions) {
    for (const auto& a : actions) {
      switch (a.kind) {
        case RppAction::Kind::send_frame:
          queue.push_back({a.at_us, from == 1 ? 2 : 1, false, 0, a.frame, next_order++});
          break;
        case RppAction::Kind::set_timer:
          queue.push_back({a.at_us, from, true, a.timer_id, {}, next_order++});
          break;
        case RppAction::Kind::capture_ranging:
          captured_ranging = true;
          break;
        case RppAction::Kind::capture_bearing:
          captured_bearing = true;
          break;
        case RppAction::Kind::deliver_to_host:
          delivered = true;
          break;
      }
    }
  }

  void run(std::vector<std::uint8_t> message) {
    RppEvent start;
    start.kind = RppEvent::Kind::host_send;
    start.peer = 2;
    start.message = std::move(message);
    push_actions(1, initiator.step(start, now));

    while (!queue.empty()) {
      auto best = queue.begin();
      for (auto it = queue.begin(); it != queue.end(); ++it) {
        // Deliveries before timers at equal times, then insertion order.
        auto key = [](const Pending& p) {
          return std::tuple(p.at, p.is_timer ? 1 : 0, p.order);
        };
        if (key(*it) < key(*best)) best = it;
      }
      const Pending p = *best;
      queue.erase(best);
      now = p.at;
      RppEvent ev;
      if (p.is_timer) {
        ev.kind = RppEvent::Kind::timer;
        ev.timer_id = p.timer_id;
      } else {
        ev.kind = RppEvent::Kind::frame_rx;
        ev.frame = p.frame;
      }
      RppTransaction& target = p.to == 1 ? initiator : responder;
      const bool was_terminal = target.terminal();
      push_actions(p.to, target.step(ev, now));
      if (!was_terminal && p.to == 1 && initiator.terminal() && initiator_done_at < 0)
        initiator_done_at = now;
      if (!was_terminal && p.to == 2 && responder.terminal() && responder_done_at < 0)
        responder_done_at = now;
    }
  }
};

}  // namespace

TEST_CASE("clean transaction walks message -> ranging -> bearing -> done in 46 ms") {
  TwoNodeHarness h;
  h.run(std::vector<std::uint8_t>(100, 0xAB));

  REQUIRE(h.initiator.phase() == RppPhase::done);
  REQUIRE(h.responder.phase() == RppPhase::done);
  REQUIRE(h.captured_ranging);
  REQUIRE(h.captured_bearing);
  REQUIRE(h.delivered);
  REQUIRE(h.responder.reassembled_message() == std::vector<std::uint8_t>(100, 0xAB));
  REQUIRE(h.initiator_done_at == 46000);
  REQUIRE(h.responder_done_at == 46000);

  // Phase order on both sides.
  for (const auto* txn : {&h.initiator, &h.responder}) {
    const auto& hist = txn->phase_history();
    auto msg = std::find(hist.begin(), hist.end(), RppPhase::message);
    auto rng_it = std::find(hist.begin(), hist.end(), RppPhase::ranging);
    auto brg = std::find(hist.begin(), hist.end(), RppPhase::bearing);
    auto done = std::find(hist.begin(), hist.end(), RppPhase::done);
    REQUIRE(msg < rng_it);
    REQUIRE(rng_it < brg);
    REQUIRE(brg < done);
    REQUIRE(done != hist.end());
  }
}

TEST_CASE("multi-frame transaction adds one message slot per extra frame") {
  TwoNodeHarness h;
  h.run(std::vector<std::uint8_t>(250, 1));  // 3 frames
  REQUIRE(h.responder.phase() == RppPhase::done);
  REQUIRE(h.responder_done_at == 46000 + 2 * 6000);
  REQUIRE(h.responder.reassembled_message().size() == 250);
}

TEST_CASE("rpp_step entry and failure transitions") {
  NodeConfig cfg{.id = 1};

  SECTION("host send from idle emits the init frame") {
    RppTransaction txn(RppRole::initiator, 5, 1, cfg);
    RppEvent ev;
    ev.kind = RppEvent::Kind::host_send;
    ev.peer = 2;
    ev.message = {1, 2, 3};
    const auto actions = txn.step(ev, 0);
    REQUIRE(txn.phase() == RppPhase::await_init_ack);
    REQUIRE(actions.size() == 2);
    REQUIRE(actions[0].kind == RppAction::Kind::send_frame);
    REQUIRE(actions[0].frame.type == FrameType::msg_init);
    REQUIRE(actions[1].kind == RppAction::Kind::set_timer);
  }

  SECTION("timer expiry mid-message fails with timeout and stops emitting") {
    RppTransaction txn(RppRole::initiator, 5, 1, cfg);
    RppEvent ev;
    ev.kind = RppEvent::Kind::host_send;
    ev.peer = 2;
    const auto first = txn.step(ev, 0);
    const int timer_id = first.back().timer_id;
    RppEvent ack;
    ack.kind = RppEvent::Kind::frame_rx;
    ack.frame.type = FrameType::init_ack;
    ack.frame.transaction_id = 5;
    (void)txn.step(ack, 4000);
    REQUIRE(txn.phase() == RppPhase::message);
    RppEvent timer;
    timer.kind = RppEvent::Kind::timer;
    timer.timer_id = timer_id + 1;  // the live message timer
    const auto actions = txn.step(timer, 20000);
    REQUIRE(txn.phase() == RppPhase::failed);
    REQUIRE(txn.failure_cause() == FailureCause::timeout);
    REQUIRE(actions.empty());
  }

  SECTION("responder enters bearing when the ranging final arrives") {
    RppTransaction txn(RppRole::responder, 9, 2, cfg);
    RppEvent init;
    init.kind = RppEvent::Kind::frame_rx;
    init.frame.type = FrameType::msg_init;
    init.frame.transaction_id = 9;
    init.frame.payload = {0, 1, 0, 2, 0, 1};  // src 1, dst 2, 1 frame
    (void)txn.step(init, 0);
    RppEvent data;
    data.kind = RppEvent::Kind::frame_rx;
    data.frame.type = FrameType::msg_data;
    data.frame.transaction_id = 9;
    data.frame.sequence = 0;
    (void)txn.step(data, 4000);
    REQUIRE(txn.phase() == RppPhase::ranging);
    RppEvent poll;
    poll.kind = RppEvent::Kind::frame_rx;
    poll.frame.type = FrameType::rng_poll;
    poll.frame.transaction_id = 9;
    (void)txn.step(poll, 10000);
    RppEvent fin;
    fin.kind = RppEvent::Kind::frame_rx;
    fin.frame.type = FrameType::rng_final;
    fin.frame.transaction_id = 9;
    const auto actions = txn.step(fin, 22000);
    REQUIRE(txn.phase() == RppPhase::bearing);
    REQUIRE(actions[0].kind == RppAction::Kind::capture_ranging);
  }

  SECTION("corrupted frame fails with crc") {
    RppTransaction txn(RppRole::responder, 9, 2, cfg);
    RppEvent ev;
    ev.kind = RppEvent::Kind::frame_corrupt;
    (void)txn.step(ev, 0);
    REQUIRE(txn.phase() == RppPhase::failed);
    REQUIRE(txn.failure_cause() == FailureCause::crc);
  }

  SECTION("illegal event fails with protocol violation") {
    RppTransaction txn(RppRole::initiator, 5, 1, cfg);
    RppEvent ev;
    ev.kind = RppEvent::Kind::frame_rx;
    ev.frame.type = FrameType::rng_resp;
    (void)txn.step(ev, 0);
    REQUIRE(txn.phase() == RppPhase::failed);
    REQUIRE(txn.failure_cause() == FailureCause::protocol_violation);
  }
}

TEST_CASE("csma_try_send") {
  NodeConfig cfg{.id = 1};
  Rng rng(3);
  const auto idle = csma_try_send(RppPhase::idle, rng, cfg);
  REQUIRE(idle.send_now);

  for (auto phase : {RppPhase::await_init_ack, RppPhase::message, RppPhase::ranging,
                     RppPhase::bearing}) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto busy = csma_try_send(phase, rng, cfg);
      REQUIRE(!busy.send_now);
      REQUIRE(busy.backoff_us >= cfg.backoff_min_us);
      REQUIRE(busy.backoff_us <= cfg.backoff_max_us);
    }
  }
}

TEST_CASE("exhaustive event sequences to depth 12 preserve phase order") {
  NodeConfig cfg{.id = 1};

  exhaustive::Enumerator initiator_side{12};
  initiator_side.explore(RppTransaction(RppRole::initiator, 7, 1, cfg), -1, 0);
  REQUIRE(!initiator_side.order_violated);
  REQUIRE(initiator_side.done_paths > 0);

  exhaustive::Enumerator responder_side{12};
  responder_side.explore(RppTransaction(RppRole::responder, 7, 2, cfg), -1, 0);
  REQUIRE(!responder_side.order_violated);
  REQUIRE(responder_side.done_paths > 0);

  // Depth 12 covers the 1- and 2-frame happy paths plus every failing prefix.
  REQUIRE(initiator_side.paths_explored + responder_side.paths_explored > 300);
}
