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

namespace lithe {

enum TickFlag : std::uint16_t {
  kTickMissed = 1U << 0,
  kTickSwapped = 1U << 1,
  kTickClamped = 1U << 2,
  kTickStale = 1U << 3,
  kTickNoData = 1U << 4,
  kTickControllerFault = 1U << 5,
  kTickEstop = 1U << 6,
  kTickTransportLate = 1U << 7,  // staged ack or feedback not seen in time
  kTickFeedbackTorn = 1U << 8,
  kTickVelocityLimited = 1U << 9,
};

/// One record per executed Spine cycle, 64 bytes on the wire.
struct TickMetrics {
  std::uint64_t cycle;
  std::int64_t scheduled_release_ns;  // T0 + cycle * period
  std::int32_t release_jitter_ns;     // actual - scheduled
  std::int32_t handoff_ns;            // release -> transport staged ack
  std::int32_t compute_ns;            // feedback read -> command written
  std::uint32_t controller_id;        // controller that computed this cycle
  std::uint16_t flags;                // TickFlag bits
  std::uint16_t feedback_age;         // cycle - feedback cycle stamp
  float omega;                        // feedback x_k
  double theta;                       // feedback x_k
  double setpoint;                    // r_{k+1}
  double torque;                      // u_{k+1} as written to the command cell
};
static_assert(sizeof(TickMetrics) == 64);

}  // namespace lithe
