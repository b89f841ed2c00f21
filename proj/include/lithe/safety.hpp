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

#include "lithe_layout.hpp"

namespace lithe {

struct SafetyLimits {
  double torque_limit = 3.0;     // N m
  double velocity_limit = 10.0;  // rad/s
};

enum SafetyEvent : std::uint32_t {
  kSafetyNone = 0,
  kSafetyNonFinite = 1U << 0,
  kSafetyClamped = 1U << 1,
  kSafetyVelocityLimited = 1U << 2,
};

struct SafetyOutcome {
  gen::ActuatorCommand command;
  std::uint32_t events;
};

/// Non-finite torque becomes 0 with mode 1 (controller fault); torque is
/// clamped to +-torque_limit; above velocity_limit only torque opposing the
/// motion passes.
SafetyOutcome apply_safety(const gen::ActuatorCommand& cmd, const gen::RobotState& state,
                           const SafetyLimits& limits) noexcept;

}  // namespace lithe
