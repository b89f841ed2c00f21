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

#include <cstdint>
#include <optional>
#include <string_view>

namespace lithe {

std::int64_t monotonic_ns() noexcept;

struct WaitResult {
  std::int64_t woke_ns;  // first observed time >= deadline
  bool overrun;          // the deadline had already passed on entry
};

/// Source of time for the cyclic stages. The realtime implementation reads
/// the monotonic clock; the lockstep one advances a virtual clock and runs
/// the transport's pending events as time passes, which makes a whole run
/// single-threaded and bit-reproducible.
class Timebase {
 public:
  virtual ~Timebase() = default;
  virtual std::int64_t now() noexcept = 0;
  virtual WaitResult wait_until(std::int64_t deadline_ns) noexcept = 0;
  /// Called inside polling loops (e.g. waiting for a counter to move).
  virtual void relax() noexcept = 0;
};

/// spin: pure busy-poll (dedicated core). yield: poll with sched_yield.
/// hybrid: OS sleep until `slack` before the deadline, then busy-poll.
/// hybrid_yield: as hybrid, but the final phase yields between polls.
enum class WaitStrategy { spin, yield, hybrid, hybrid_yield };

std::optional<WaitStrategy> parse_wait_strategy(std::string_view name) noexcept;
std::string_view wait_strategy_name(WaitStrategy s) noexcept;

/// Pure spinning needs a core to itself; with fewer cores than pipeline
/// stages the spinning stage would starve the others.
WaitStrategy default_wait_strategy(unsigned cores, bool spine_role) noexcept;

class RealtimeTimebase final : public Timebase {
 public:
  explicit RealtimeTimebase(WaitStrategy strategy = WaitStrategy::spin,
                            std::int64_t sleep_slack_ns = 200'000) noexcept
      : strategy_(strategy), slack_ns_(sleep_slack_ns) {}

  std::int64_t now() noexcept override { return monotonic_ns(); }
  WaitResult wait_until(std::int64_t deadline_ns) noexcept override;
  void relax() noexcept override;
  WaitStrategy strategy() const noexcept { return strategy_; }

 private:
  WaitStrategy strategy_;
  std::int64_t slack_ns_;
};

/// Something that has timed work to do while the lockstep clock advances.
class LockstepAgent {
 public:
  virtual ~LockstepAgent() = default;
  /// Time of the next pending event, or INT64_MAX when idle.
  virtual std::int64_t next_event_ns() const noexcept = 0;
  /// Runs every event due at `now_ns`.
  virtual void service(std::int64_t now_ns) noexcept = 0;
};

class LockstepTimebase final : public Timebase {
 public:
  explicit LockstepTimebase(std::int64_t start_ns = 0, std::int64_t relax_quantum_ns = 100) noexcept
      : now_(start_ns), quantum_(relax_quantum_ns) {}

  void set_agent(LockstepAgent* agent) noexcept { agent_ = agent; }
  std::int64_t now() noexcept override { return now_; }
  WaitResult wait_until(std::int64_t deadline_ns) noexcept override;
  void relax() noexcept override;
  /// Charges simulated work (e.g. a compute budget) to the clock.
  void advance(std::int64_t ns) noexcept;

 private:
  void run_due(std::int64_t until) noexcept;

  std::int64_t now_;
  std::int64_t quantum_;
  LockstepAgent* agent_ = nullptr;
};

}  // namespace lithe
