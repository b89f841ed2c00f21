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

#include "lithe/safety.hpp"

#include <cmath>

#include "lithe/transport.hpp"

namespace lithe {

SafetyOutcome apply_safety(const gen::ActuatorCommand& cmd, const gen::RobotState& state,
                           const SafetyLimits& limits) noexcept {
  SafetyOutcome out{cmd, kSafetyNone};
  double tau = cmd.torque;
  if (!std::isfinite(tau)) {
    out.command.torque = 0.0;
    out.command.mode = kModeSafeZero;
    out.events |= kSafetyNonFinite;
    return out;
  }
  if (tau > limits.torque_limit) {
    tau = limits.torque_limit;
    out.events |= kSafetyClamped;
  } else if (tau < -limits.torque_limit) {
    tau = -limits.torque_limit;
    out.events |= kSafetyClamped;
  }
  const double w = state.velocity;
  if (std::isfinite(w) && std::fabs(w) > limits.velocity_limit && tau * w > 0.0) {
    tau = 0.0;
    out.events |= kSafetyVelocityLimited;
  }
  out.command.torque = tau;
  return out;
}

}  // namespace lithe
