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

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string_view>

#include "lithe/command_shaping.hpp"
#include "lithe/controller.hpp"
#include "lithe/metrics.hpp"
#include "lithe/safety.hpp"
#include "lithe/segment.hpp"
#include "lithe/spsc_queue.hpp"
#include "lithe/timebase.hpp"
#include "lithe/transport.hpp"

namespace lithe {

enum class MissPolicy { skip, estop };
std::optional<MissPolicy> parse_miss_policy(std::string_view name) noexcept;

struct SpineConfig {
  std::int64_t period_ns = 1'000'000;
  int core = 1;
  MissPolicy miss_policy = MissPolicy::skip;
  SafetyLimits safety;
  double stale_threshold = kDefaultStaleThreshold;
  unsigned retry_budget = kDefaultRetryBudget;
  bool estop_on_controller_fault = false;
  std::uint32_t transport_dead_cycles = 50;
  std::int64_t handoff_timeout_ns = 0;  // 0: half a period

  bool valid() const noexcept {
    return period_ns >= 100'000 && safety.torque_limit > 0 && safety.velocity_limit > 0;
  }
};

enum class EstopReason : std::uint32_t {
  none = 0,
  deadline_miss,
  transport_dead,
  controller_fault,
  external,
};

/// The cyclic control loop. step() executes one cycle k released at
/// T0 + k * period:
///   wait for release, hand u_k to the transport, read feedback x_k, sample
///   r_{k+1}, compute and clamp u_{k+1}, write it to the command cell, run
///   the swap check, publish metrics.
/// run() repeats step() on the calling thread until stopped.
class Spine {
 public:
  Spine(const SpineConfig& cfg, SegmentViews views, Handshake& hs, ActiveController& active,
        Timebase& tb, SpscQueue<TickMetrics>* metrics, bool notify_transport);

  /// Latches T0 and writes a zero command. Call once before step().
  void start(std::int64_t t0_ns) noexcept;
  void step() noexcept;
  void run(const std::atomic<bool>& stop) noexcept;

  void request_estop() noexcept;

  const SpineConfig& config() const noexcept { return cfg_; }
  std::int64_t t0_ns() const noexcept { return t0_; }
  /// Index of the next cycle to execute.
  std::uint64_t next_cycle() const noexcept { return next_.load(std::memory_order_acquire); }
  std::uint64_t executed_cycles() const noexcept {
    return executed_.load(std::memory_order_acquire);
  }
  std::uint64_t missed() const noexcept { return missed_.load(std::memory_order_acquire); }
  std::uint64_t overruns() const noexcept { return overruns_.load(std::memory_order_acquire); }
  std::uint64_t dropped_metrics() const noexcept {
    return dropped_.load(std::memory_order_relaxed);
  }
  std::uint64_t clamp_events() const noexcept { return clamps_.load(std::memory_order_relaxed); }
  std::uint64_t controller_faults() const noexcept {
    return faults_.load(std::memory_order_relaxed);
  }
  bool estopped() const noexcept { return estop_.load(std::memory_order_acquire); }
  EstopReason estop_reason() const noexcept {
    return static_cast<EstopReason>(estop_reason_.load(std::memory_order_acquire));
  }
  bool running() const noexcept { return running_.load(std::memory_order_acquire); }
  void set_running(bool r) noexcept { running_.store(r, std::memory_order_release); }

  /// Seconds on the trajectory clock at the release of cycle k.
  double cycle_time(std::uint64_t k) const noexcept {
    return static_cast<double>(k) * static_cast<double>(cfg_.period_ns) * 1e-9;
  }

 private:
  void latch_estop(EstopReason why) noexcept;

  SpineConfig cfg_;
  SegmentViews views_;
  WaypointRing ring_;
  Handshake& hs_;
  ActiveController& active_;
  Timebase& tb_;
  SpscQueue<TickMetrics>* metrics_;
  bool notify_;
  double dt_;
  std::int64_t handoff_timeout_;

  std::int64_t t0_ = 0;
  std::uint64_t seq_ = 0;
  SeqlockCell<HandedCommand> handed_;
  gen::ActuatorCommand handed_cmd_{0.0, kModeTorque};
  std::uint64_t last_fb_seq_ = 0;
  std::uint32_t no_progress_ = 0;
  gen::RobotState last_state_{};

  std::atomic<std::uint64_t> next_{0};
  std::atomic<std::uint64_t> executed_{0};
  std::atomic<std::uint64_t> missed_{0};
  std::atomic<std::uint64_t> overruns_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<std::uint64_t> clamps_{0};
  std::atomic<std::uint64_t> faults_{0};
  std::atomic<bool> estop_{false};
  std::atomic<std::uint32_t> estop_reason_{0};
  std::atomic<bool> estop_request_{false};
  std::atomic<bool> running_{false};
};

}  // namespace lithe
