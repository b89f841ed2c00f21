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
#include <random>
#include <vector>

#include "lithe/plant.hpp"
#include "lithe/seqlock.hpp"
#include "lithe/timebase.hpp"
#include "lithe_layout.hpp"

namespace lithe {

struct BusModel {
  double dispatch_latency = 150e-6;  // s
  double return_latency = 150e-6;    // s
  double jitter_stddev = 0.0;        // s, added to each latency, truncated at 0
  std::uint64_t seed = 1;
};

/// Bits of RobotState::fault_flags set by the transport.
enum FaultFlag : std::uint32_t {
  kFaultTornCommand = 1U << 0,       // command latch ran out of retries
  kFaultControllerFault = 1U << 1,   // command mode 1
  kFaultEstop = 1U << 2,             // command mode 2
  kFaultPlantRejected = 1U << 3,     // non-finite integration input
};

/// ActuatorCommand::mode values.
enum CommandMode : std::uint32_t { kModeTorque = 0, kModeSafeZero = 1, kModeEstop = 2 };

/// The command handed to the transport for one cycle.
struct HandedCommand {
  std::uint64_t seq;
  std::uint64_t cycle;
  gen::ActuatorCommand command;
};

/// Spine <-> Transport counters. Spine-written and transport-written
/// counters sit on separate cache lines. The handed command is published
/// under its own seqlock before cmd_seq moves, so a late latch still gets
/// the command that belongs to the cycle it reports.
struct Handshake {
  alignas(64) std::atomic<std::uint64_t> cmd_seq{0};
  std::atomic<std::uint32_t> doorbell{0};
  alignas(64) std::uint64_t handed_counter = 0;
  std::uint64_t handed_payload[(sizeof(HandedCommand) + 7) / 8] = {};
  alignas(64) std::atomic<std::uint64_t> staged_seq{0};
  std::atomic<std::uint64_t> fb_seq{0};

  SeqlockCell<HandedCommand> handed() noexcept {
    return SeqlockCell<HandedCommand>(&handed_counter, handed_payload);
  }
};

/// One bus exchange as seen by the transport (pre-reserved, optional).
struct ExchangeRecord {
  std::uint64_t cmd_seq;
  std::uint64_t cmd_cycle;
  double torque;          // as latched from the handoff
  std::uint32_t mode;
  std::uint32_t fault_flags;
  double theta;           // plant state returned with this exchange
  double omega;
  std::int64_t latch_ns;
  std::int64_t dispatch_done_ns;
  std::int64_t feedback_ns;
};

/// The transport domain: latches the staged command, waits out the bus
/// latency, integrates the plant across the elapsed command span and writes
/// the state cell. Written as a state machine so the same code runs on its
/// own thread (realtime) or as a lockstep agent.
class TransportStage final : public LockstepAgent {
 public:
  TransportStage(const BusModel& bus, const PlantParams& plant, std::int64_t period_ns,
                 Handshake& hs, SeqlockCell<gen::RobotState> state);

  void set_initial_state(const PlantState& s) noexcept { plant_state_ = s; }
  /// Pre-reserves an exchange log of `capacity` entries; further exchanges
  /// are not recorded.
  void enable_trace(std::size_t capacity);
  const std::vector<ExchangeRecord>& trace() const noexcept { return trace_; }

  std::int64_t next_event_ns() const noexcept override;
  void service(std::int64_t now_ns) noexcept override;

  /// Thread body for realtime runs. `blocking` parks on the doorbell while
  /// idle instead of polling.
  void run(Timebase& tb, const std::atomic<bool>& stop, bool blocking) noexcept;
  /// Wakes a blocked run() so it can observe `stop`.
  void wake() noexcept;

  PlantState plant_state() const noexcept { return plant_state_; }
  std::uint64_t exchanges() const noexcept { return exchanges_.load(std::memory_order_relaxed); }
  std::uint64_t torn_latches() const noexcept { return torn_.load(std::memory_order_relaxed); }

 private:
  enum class Phase { idle, dispatching, returning };

  std::int64_t latency_ns(double seconds) noexcept;

  BusModel bus_;
  PlantParams plant_;
  std::int64_t period_ns_;
  Handshake& hs_;
  SeqlockCell<HandedCommand> handed_;
  SeqlockCell<gen::RobotState> state_;

  Phase phase_ = Phase::idle;
  std::uint64_t seen_seq_ = 0;
  std::uint64_t prev_cycle_ = 0;
  bool first_ = true;
  std::int64_t due_ns_ = 0;
  gen::ActuatorCommand latched_{};
  double last_torque_ = 0.0;
  std::uint32_t flags_ = 0;
  ExchangeRecord current_{};
  PlantState plant_state_{};
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
  std::vector<ExchangeRecord> trace_;
  std::size_t trace_cap_ = 0;
  std::atomic<std::uint64_t> exchanges_{0};
  std::atomic<std::uint64_t> torn_{0};
};

}  // namespace lithe
