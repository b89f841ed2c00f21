// Copyright 2026 The Lithe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lithe/transport.hpp"

#include <cmath>
#include <limits>

namespace lithe {

TransportStage::TransportStage(const BusModel& bus, const PlantParams& plant,
                               std::int64_t period_ns, Handshake& hs,
                               SeqlockCell<gen::RobotState> state)
    : bus_(bus),
      plant_(plant),
      period_ns_(period_ns),
      hs_(hs),
      handed_(hs.handed()),
      state_(state),
      rng_(bus.seed) {}

void TransportStage::enable_trace(std::size_t capacity) {
  trace_.clear();
  trace_.reserve(capacity);
  trace_cap_ = capacity;
}

std::int64_t TransportStage::latency_ns(double seconds) noexcept {
  double s = seconds;
  if (bus_.jitter_stddev > 0.0) {
    s += bus_.jitter_stddev * noise_(rng_);
  }
  return s <= 0.0 ? 0 : static_cast<std::int64_t>(std::llround(s * 1e9));
}

std::int64_t TransportStage::next_event_ns() const noexcept {
  if (phase_ != Phase::idle) {
    return due_ns_;
  }
  if (hs_.cmd_seq.load(std::memory_order_acquire) != seen_seq_) {
    return std::numeric_limits<std::int64_t>::min();
  }
  return std::numeric_limits<std::int64_t>::max();
}

void TransportStage::service(std::int64_t now_ns) noexcept {
  for (;;) {
    switch (phase_) {
      case Phase::idle: {
        std::uint64_t seq = hs_.cmd_seq.load(std::memory_order_acquire);
        if (seq == seen_seq_) {
          return;
        }
        const auto r = handed_.read();
        std::uint64_t cycle = prev_cycle_ + 1;
        flags_ = 0;
        if (r.ok && r.value.seq >= seq) {
          // The Spine may have handed a newer command since cmd_seq was read.
          seq = r.value.seq;
          cycle = r.value.cycle;
          latched_ = r.value.command;
        } else {
          latched_ = {last_torque_, kModeTorque};
          flags_ |= kFaultTornCommand;
          torn_.fetch_add(1, std::memory_order_relaxed);
        }
        seen_seq_ = seq;
        hs_.staged_seq.store(seq, std::memory_order_release);
        current_ = {};
        current_.cmd_seq = seq;
        current_.cmd_cycle = cycle;
        current_.torque = latched_.torque;
        current_.mode = latched_.mode;
        current_.latch_ns = now_ns;
        phase_ = Phase::dispatching;
        due_ns_ = now_ns + latency_ns(bus_.dispatch_latency);
        break;
      }
      case Phase::dispatching: {
        if (now_ns < due_ns_) {
          return;
        }
        const std::uint64_t cycle = current_.cmd_cycle;
        const std::uint64_t span_cycles = first_ || cycle <= prev_cycle_ ? 1 : cycle - prev_cycle_;
        first_ = false;
        prev_cycle_ = cycle;
        if (latched_.mode == kModeSafeZero) {
          flags_ |= kFaultControllerFault;
        } else if (latched_.mode == kModeEstop) {
          flags_ |= kFaultEstop;
        }
        const double span = static_cast<double>(span_cycles * period_ns_) * 1e-9;
        if (!integrate_plant(plant_, plant_state_, latched_.torque, span)) {
          flags_ |= kFaultPlantRejected;
        }
        last_torque_ = latched_.torque;
        current_.dispatch_done_ns = now_ns;
        phase_ = Phase::returning;
        due_ns_ = now_ns + latency_ns(bus_.return_latency);
        break;
      }
      case Phase::returning: {
        if (now_ns < due_ns_) {
          return;
        }
        gen::RobotState s{};
        s.position = plant_state_.theta;
        s.velocity = plant_state_.omega;
        s.torque_measured = latched_.torque;
        s.cycle = current_.cmd_cycle;
        s.fault_flags = flags_;
        state_.write(s);
        hs_.fb_seq.fetch_add(1, std::memory_order_release);
        exchanges_.fetch_add(1, std::memory_order_relaxed);
        current_.fault_flags = flags_;
        current_.theta = plant_state_.theta;
        current_.omega = plant_state_.omega;
        current_.feedback_ns = now_ns;
        if (trace_.size() < trace_cap_) {
          trace_.push_back(current_);
        }
        phase_ = Phase::idle;
        break;
      }
    }
  }
}

void TransportStage::run(Timebase& tb, const std::atomic<bool>& stop, bool blocking) noexcept {
  while (!stop.load(std::memory_order_acquire)) {
    if (phase_ == Phase::idle) {
      if (hs_.cmd_seq.load(std::memory_order_acquire) == seen_seq_) {
        if (blocking) {
          const std::uint32_t bell = hs_.doorbell.load(std::memory_order_acquire);
          if (hs_.cmd_seq.load(std::memory_order_acquire) == seen_seq_ &&
              !stop.load(std::memory_order_acquire)) {
            hs_.doorbell.wait(bell, std::memory_order_acquire);
          }
        } else {
          tb.relax();
        }
        continue;
      }
      service(tb.now());
    } else {
      tb.wait_until(due_ns_);
      service(tb.now());
    }
  }
}

void TransportStage::wake() noexcept {
  hs_.doorbell.fetch_add(1, std::memory_order_release);
  hs_.doorbell.notify_all();
}

}  // namespace lithe
