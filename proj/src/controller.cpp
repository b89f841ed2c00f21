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

#include "lithe/controller.hpp"

#include <cstring>

#include "lithe/layout.hpp"

namespace lithe {

namespace {

std::int32_t zero_control(const gen::RobotState*, double, double, double, double* persistent,
                          gen::ActuatorCommand* out) {
  out->torque = 0.0;
  out->mode = 0;
  persistent[LITHE_SLOT_LAST_TORQUE] = 0.0;
  return 0;
}

const ControllerSlot kZero{&zero_control, 0, "zero"};

}  // namespace

const ControllerSlot& builtin_zero_controller() noexcept {
  return kZero;
}

double controller_tag(std::string_view name) noexcept {
  const std::uint64_t h = schema::fnv1a64(name);
  double d;
  std::memcpy(&d, &h, sizeof d);
  return d;
}

ActiveController::ActiveController() : current_(&kZero) {}

bool ActiveController::swap_check(std::uint64_t cycle) noexcept {
  if (!ready_.load(std::memory_order_acquire)) {
    return false;
  }
  const ControllerSlot* next = pending_.load(std::memory_order_relaxed);
  const ControllerSlot* old = current_.load(std::memory_order_relaxed);
  current_.store(next, std::memory_order_release);
  pending_.store(nullptr, std::memory_order_relaxed);
  // A full queue only leaks the old slot; it is never freed while in use.
  retired_.push(old);
  active_id_.store(next->id, std::memory_order_relaxed);
  activation_cycle_.store(cycle + 1, std::memory_order_relaxed);
  swaps_.fetch_add(1, std::memory_order_relaxed);
  ready_.store(false, std::memory_order_release);
  return true;
}

bool ActiveController::publish(const ControllerSlot* next) noexcept {
  if (next == nullptr || ready_.load(std::memory_order_acquire)) {
    return false;
  }
  pending_.store(next, std::memory_order_relaxed);
  ready_.store(true, std::memory_order_release);
  return true;
}

}  // namespace lithe
