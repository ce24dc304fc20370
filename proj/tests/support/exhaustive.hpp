#pragma once

// Exhaustive RPP event-sequence enumeration shared by the unit and acceptance
// suites.

#include <algorithm>

#include "tetraloc/protocol.hpp"

namespace exhaustive {

using namespace tetraloc;

// Exhaustive event-sequence enumeration. Events are materialized against the
// machine's current expectations (sequence numbers, live timer) so the happy
// path is reachable; everything else must dead-end in `failed`.
struct Enumerator {
  int max_depth;
  long paths_explored = 0;
  long done_paths = 0;
  bool order_violated = false;

  enum class Sym {
    host_send,
    init_ack,
    data_ack,
    rng_resp,
    msg_init,
    msg_data,
    rng_poll,
    rng_final,
    bearing_ping,
    live_timer,
    corrupt,
  };

  static RppEvent materialize(Sym sym, const RppTransaction& txn) {
    RppEvent ev;
    switch (sym) {
      case Sym::host_send:
        ev.kind = RppEvent::Kind::host_send;
        ev.peer = 2;
        ev.message = {0x55};
        return ev;
      case Sym::corrupt:
        ev.kind = RppEvent::Kind::frame_corrupt;
        return ev;
      case Sym::live_timer:
        ev.kind = RppEvent::Kind::timer;
        ev.timer_id = 1000000;  // resolved by caller
        return ev;
      default:
        break;
    }
    ev.kind = RppEvent::Kind::frame_rx;
    ev.frame.transaction_id = txn.txn_id();
    switch (sym) {
      case Sym::init_ack: ev.frame.type = FrameType::init_ack; break;
      case Sym::data_ack:
        ev.frame.type = FrameType::data_ack;
        ev.frame.sequence = txn.expected_data_seq();
        break;
      case Sym::rng_resp: ev.frame.type = FrameType::rng_resp; break;
      case Sym::msg_init:
        ev.frame.type = FrameType::msg_init;
        ev.frame.payload = {0, 1, 0, 2, 0, 2};  // src 1, dst 2, 2 frames
        break;
      case Sym::msg_data:
        ev.frame.type = FrameType::msg_data;
        ev.frame.sequence = txn.expected_data_seq();
        ev.frame.payload.assign(kMaxPayload, 0x11);
        break;
      case Sym::rng_poll: ev.frame.type = FrameType::rng_poll; break;
      case Sym::rng_final: ev.frame.type = FrameType::rng_final; break;
      case Sym::bearing_ping: ev.frame.type = FrameType::bearing_ping; break;
      default: break;
    }
    return ev;
  }

  void check_done_order(const RppTransaction& txn) {
    const auto& hist = txn.phase_history();
    if (std::find(hist.begin(), hist.end(), RppPhase::done) == hist.end()) return;
    ++done_paths;
    const auto msg = std::find(hist.begin(), hist.end(), RppPhase::message);
    const auto rng_it = std::find(hist.begin(), hist.end(), RppPhase::ranging);
    const auto brg = std::find(hist.begin(), hist.end(), RppPhase::bearing);
    const auto done = std::find(hist.begin(), hist.end(), RppPhase::done);
    if (!(msg != hist.end() && rng_it != hist.end() && brg != hist.end() && msg < rng_it &&
          rng_it < brg && brg < done))
      order_violated = true;
  }

  void explore(const RppTransaction& txn, int live_timer, int depth) {
    ++paths_explored;
    check_done_order(txn);
    if (txn.terminal() || depth == max_depth) return;
    for (Sym sym :
         {Sym::host_send, Sym::init_ack, Sym::data_ack, Sym::rng_resp, Sym::msg_init,
          Sym::msg_data, Sym::rng_poll, Sym::rng_final, Sym::bearing_ping, Sym::live_timer,
          Sym::corrupt}) {
      RppTransaction next = txn;
      RppEvent ev = materialize(sym, next);
      if (sym == Sym::live_timer) {
        if (live_timer < 0) continue;
        ev.timer_id = live_timer;
      }
      int next_timer = live_timer;
      const auto actions = next.step(ev, depth * 1000);
      for (const auto& a : actions)
        if (a.kind == RppAction::Kind::set_timer) next_timer = a.timer_id;
      explore(next, next_timer, depth + 1);
    }
  }
};

}  // namespace exhaustive
