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

#include "lithe/waypoint_ring.hpp"

namespace lithe {

inline constexpr double kDefaultStaleThreshold = 0.25;

struct SplineSample {
  double position;
  double velocity;
};

/// Non-uniform Catmull-Rom segment between p1 and p2 in cubic Hermite form
/// with chord-scaled tangents. Requires strictly increasing knot times and
/// p1.t <= t <= p2.t; returns false otherwise.
bool catmull_rom(const Waypoint& p0, const Waypoint& p1, const Waypoint& p2, const Waypoint& p3,
                 double t, SplineSample& out) noexcept;

struct SetpointSample {
  enum class Source { interpolated, hold_last, no_data };
  double position = 0.0;
  double velocity_ff = 0.0;
  bool stale = false;
  Source source = Source::no_data;
};

/// Brackets `t` in the ring and interpolates. Past the newest waypoint the
/// newest position is held; the sample is flagged stale once `t` is more
/// than `stale_threshold` beyond it (or when fewer than four waypoints
/// exist). A ring that was never written yields no_data.
SetpointSample sample_setpoint(const WaypointRing& ring, double t,
                               double stale_threshold = kDefaultStaleThreshold,
                               unsigned retries = kDefaultRetryBudget) noexcept;

}  // namespace lithe
