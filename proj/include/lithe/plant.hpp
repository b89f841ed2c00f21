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

namespace lithe {

/// 1-DOF gravity-loaded pendulum (the simulated arm).
struct PlantParams {
  double inertia = 0.02;       // kg m^2
  double mgl = 1.2;            // N m
  double damping = 0.05;       // N m s / rad
  double torque_limit = 3.0;   // N m, actuator saturation
  double substep = 5e-5;       // s

  bool valid() const noexcept;
};

struct PlantState {
  double theta = 0.0;  // rad
  double omega = 0.0;  // rad/s
  double time = 0.0;   // s
};

/// One semi-implicit Euler step. Returns false (state untouched) for
/// non-finite inputs or dt outside (0, 4 * substep].
bool step_plant(const PlantParams& p, PlantState& s, double torque, double dt) noexcept;

/// Integrates `span` seconds at constant torque in substeps of at most
/// p.substep (the last one shortened to land exactly on the span).
bool integrate_plant(const PlantParams& p, PlantState& s, double torque, double span) noexcept;

/// 1/2 I w^2 - mgl cos(theta)
double plant_energy(const PlantParams& p, const PlantState& s) noexcept;

}  // namespace lithe
