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
#include <mutex>
#include <vector>

#include "lithe/waypoint_ring.hpp"

namespace lithe {

struct BrainConfig {
  bool enabled = true;
  double frequency = 0.5;  // Hz
  double amplitude = 1.0;  // rad
  double offset = 0.0;     // rad
  double rate = 100.0;     // waypoints per second
  double lookahead = 0.1;  // s published ahead of now
};

/// The in-process trajectory producer: publishes a sine reference into the
/// waypoint ring ahead of the Spine clock. It is the ring's only producer;
/// externally supplied trajectories go through publish() so the
/// single-writer rule holds.
class Brain {
 public:
  Brain(WaypointRing ring, BrainConfig cfg);

  /// Publishes every waypoint due up to now + lookahead (generator mode).
  void tick(double now_s);
  /// Suspends all publishing until now + duration.
  void freeze(double now_s, double duration_s);
  bool frozen(double now_s) const;
  double frozen_until() const;

  /// Hands the ring to an external producer (generator stops) or back.
  void set_generator_enabled(bool enabled);
  bool generator_enabled() const;

  enum class ExternalResult { ok, frozen, rejected };
  /// Publishes caller-supplied waypoints in order; stops at the first one
  /// the ring rejects. `accepted` receives the number published.
  ExternalResult publish(const std::vector<Waypoint>& points, double now_s, std::size_t& accepted);

  double reference(double t) const noexcept;
  std::uint64_t published() const;
  double last_published_t() const;
  const BrainConfig& config() const noexcept { return cfg_; }

 private:
  mutable std::mutex mu_;
  WaypointRing ring_;
  BrainConfig cfg_;
  double next_t_ = 0.0;
  double last_t_ = -1.0;
  double frozen_until_ = -1.0;
  std::uint64_t published_ = 0;
};

}  // namespace lithe
