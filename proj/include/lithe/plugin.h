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

// Plugin ABI. A controller shared object exports two unmangled symbols:
//
//   lithe_abi      const lithe_abi_info, checked by the loader before use
//   lithe_control  the control law, called once per Spine cycle
//
// The layout constants come from the generated lithe_layout.hpp, so a
// plugin built against a different schema carries a different layout_hash
// and is rejected at load time.

#pragma once

#include <cstdint>

#include "lithe_layout.hpp"

#define LITHE_ABI_VERSION 1u

extern "C" {

struct lithe_abi_info {
  std::uint32_t abi_version;
  std::uint64_t layout_hash;
  char name[32];
};

typedef std::int32_t (*lithe_control_fn)(const lithe::gen::RobotState* state, double setpoint,
                                         double setpoint_velocity, double dt, double* persistent,
                                         lithe::gen::ActuatorCommand* out);
}

#define LITHE_EXPORT extern "C" __attribute__((visibility("default")))

#define LITHE_PLUGIN(name_literal)                                             \
  LITHE_EXPORT const lithe_abi_info lithe_abi = {LITHE_ABI_VERSION,            \
                                                 lithe::gen::kLayoutHash, name_literal}

#define LITHE_CONTROL(state, setpoint, setpoint_velocity, dt, persistent, out) \
  LITHE_EXPORT std::int32_t lithe_control(                                     \
      const lithe::gen::RobotState* state, double setpoint, double setpoint_velocity, double dt, \
      double* persistent, lithe::gen::ActuatorCommand* out)

// Persistent block slot conventions shared by the shipped controllers.
#define LITHE_SLOT_INTEGRAL 0
#define LITHE_SLOT_FILTERED_VELOCITY 1
#define LITHE_SLOT_LAST_TORQUE 2
#define LITHE_SLOT_CONTROLLER_TAG 3
#define LITHE_SLOT_HANDOVER_PROGRESS 4
#define LITHE_SLOT_PRIVATE 8
