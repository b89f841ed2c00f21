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

#include "lithe/command_shaping.hpp"

#include <algorithm>
#include <cmath>

namespace lithe {

bool catmull_rom(const Waypoint& p0, const Waypoint& p1, const Waypoint& p2, const Waypoint& p3,
                 double t, SplineSample& out) noexcept {
  if (!(p0.t < p1.t && p1.t < p2.t && p2.t < p3.t) || !(p1.t <= t && t <= p2.t)) {
    return false;
  }
  const double h = p2.t - p1.t;
  const double s = (t - p1.t) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double m1 = (p2.position - p0.position) / (p2.t - p0.t) * h;
  const double m2 = (p3.position - p1.position) / (p3.t - p1.t) * h;

  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  out.position = h00 * p1.position + h10 * m1 + h01 * p2.position + h11 * m2;

  const double d00 = 6.0 * s2 - 6.0 * s;
  const double d10 = 3.0 * s2 - 4.0 * s + 1.0;
  const double d01 = -6.0 * s2 + 6.0 * s;
  const double d11 = 3.0 * s2 - 2.0 * s;
  out.velocity = (d00 * p1.position + d10 * m1 + d01 * p2.position + d11 * m2) / h;
  return true;
}

SetpointSample sample_setpoint(const WaypointRing& ring, double t, double stale_threshold,
                               unsigned retries) noexcept {
  SetpointSample out;
  const Bracket b = ring.bracket(t, retries);
  switch (b.kind) {
    case Bracket::Kind::no_data:
      out.source = SetpointSample::Source::no_data;
      out.stale = true;
      return out;
    case Bracket::Kind::hold_last:
      out.source = SetpointSample::Source::hold_last;
      out.position = b.newest.position;
      out.stale = b.published < 4 || t - b.newest.t > stale_threshold;
      return out;
    case Bracket::Kind::interpolate:
      break;
  }
  const double tq = std::clamp(t, b.points[1].t, b.points[2].t);
  SplineSample s{};
  if (!catmull_rom(b.points[0], b.points[1], b.points[2], b.points[3], tq, s) ||
      !std::isfinite(s.position) || !std::isfinite(s.velocity)) {
    out.source = SetpointSample::Source::hold_last;
    out.position = b.newest.position;
    out.stale = true;
    return out;
  }
  out.source = SetpointSample::Source::interpolated;
  out.position = s.position;
  out.velocity_ff = b.before_oldest ? 0.0 : s.velocity;
  return out;
}

}  // namespace lithe
