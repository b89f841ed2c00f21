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
#include <string_view>

#include "lithe/plugin.h"
#include "lithe/spsc_queue.hpp"

namespace lithe {

using ControlFn = lithe_control_fn;

/// Immutable once published. Owned by whoever created it (the loader, or
/// static storage for the built-in zero law); the Spine only borrows it.
struct ControllerSlot {
  ControlFn entry = nullptr;
  std::uint32_t id = 0;
  char name[32] = {};
};

/// The built-in zero-torque law, id 0. Never unloaded.
const ControllerSlot& builtin_zero_controller() noexcept;

/// FNV-1a 64 of a controller name, stored bit-for-bit in the persistent
/// block's tag slot so a controller can tell whether it was just swapped in.
double controller_tag(std::string_view name) noexcept;

/// Exchange point between the loader (publisher) and the Spine. The Spine
/// reads `current` each cycle and performs the exchange in swap_check();
/// the loader installs `pending` and raises `ready`.
class ActiveController {
 public:
  ActiveController();

  /// Spine side: the controller to call this cycle.
  const ControllerSlot* current() const noexcept {
    return current_.load(std::memory_order_relaxed);
  }

  /// Spine side, once per cycle after the command write. Returns true if a
  /// pending controller became current. `cycle` is the cycle number whose
  /// successor will first use it.
  bool swap_check(std::uint64_t cycle) noexcept;

  /// Loader side. Fails if another publish is still pending.
  bool publish(const ControllerSlot* next) noexcept;
  bool pending() const noexcept { return ready_.load(std::memory_order_acquire); }

  /// Loader side: controllers swapped out by the Spine, oldest first.
  bool pop_retired(const ControllerSlot*& out) noexcept { return retired_.pop(out); }

  std::uint32_t active_id() const noexcept { return active_id_.load(std::memory_order_acquire); }
  /// Cycle at which the current controller computed its first command.
  std::uint64_t activation_cycle() const noexcept {
    return activation_cycle_.load(std::memory_order_acquire);
  }
  std::uint64_t swaps() const noexcept { return swaps_.load(std::memory_order_acquire); }

 private:
  std::atomic<const ControllerSlot*> current_;
  std::atomic<const ControllerSlot*> pending_{nullptr};
  std::atomic<bool> ready_{false};
  std::atomic<std::uint32_t> active_id_{0};
  std::atomic<std::uint64_t> activation_cycle_{0};
  std::atomic<std::uint64_t> swaps_{0};
  SpscQueue<const ControllerSlot*> retired_{16};
};

}  // namespace lithe
