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

#include "lithe/plant.hpp"

#include <algorithm>
#include <cmath>

namespace lithe {

bool PlantParams::valid() const noexcept {
  return inertia > 0 && mgl > 0 && damping >= 0 && torque_limit > 0 && substep > 0;
}

bool step_plant(const PlantParams& p, PlantState& s, double torque, double dt) noexcept {
  if (!std::isfinite(torque) || !std::isfinite(dt) || !std::isfinite(s.theta) ||
      !std::isfinite(s.omega) || dt <= 0.0 || dt > 4.0 * p.substep) {
    return false;
  }
  const double tau = std::clamp(torque, -p.torque_limit, p.torque_limit);
  s.omega += dt * (tau - p.mgl * std::sin(s.theta) - p.damping * s.omega) / p.inertia;
  s.theta += dt * s.omega;
  s.time += dt;
  return true;
}

bool integrate_plant(const PlantParams& p, PlantState& s, double torque, double span) noexcept {
  if (!(span > 0.0)) {
    return span == 0.0;
  }
  const auto n = static_cast<long>(std::ceil(span / p.substep - 1e-9));
  const double dt = span / static_cast<double>(n);
  for (long i = 0; i < n; ++i) {
    if (!step_plant(p, s, torque, dt)) {
      return false;
    }
  }
  return true;
}

double plant_energy(const PlantParams& p, const PlantState& s) noexcept {
  return 0.5 * p.inertia * s.omega * s.omega - p.mgl * std::cos(s.theta);
}

}  // namespace lithe
