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

#include <array>
#include <cstddef>
#include <cstdint>

#include "lithe/seqlock.hpp"
#include "lithe_layout.hpp"

namespace lithe {

using Waypoint = gen::Waypoint;

struct RingGeometry {
  std::size_t capacity;
  std::size_t slots_offset;
  std::size_t slot_stride;
  std::size_t slot_payload_offset;

  static RingGeometry generated() noexcept {
    const auto& r = gen::rings::waypoints;
    return {r.capacity, r.slots_offset, r.slot_stride, r.slot_payload_offset};
  }
};

struct Bracket {
  enum class Kind { interpolate, hold_last, no_data };
  Kind kind = Kind::no_data;
  std::array<Waypoint, 4> points{};
  // Publish-counter value of each point; -1 marks an endpoint synthesized by
  // reflection because the neighbour is not retained (or not yet published).
  std::array<std::int64_t, 4> index{-1, -1, -1, -1};
  bool before_oldest = false;
  Waypoint newest{};
  std::uint64_t published = 0;
};

/// Ring of seqlocked waypoints behind a monotone head counter. One producer;
/// any number of readers.
class WaypointRing {
 public:
  enum class PublishResult { ok, non_monotone, non_finite };

  WaypointRing() = default;
  WaypointRing(unsigned char* ring_base, RingGeometry geometry) noexcept;

  /// Producer side. Recovers the last timestamp from the ring so a restarted
  /// producer keeps the monotonicity rule.
  PublishResult publish(const Waypoint& wp) noexcept;

  std::uint64_t head() const noexcept;
  std::size_t capacity() const noexcept { return geom_.capacity; }
  static std::size_t slot_of(std::uint64_t index, std::size_t capacity) noexcept {
    return static_cast<std::size_t>(index % capacity);
  }

  /// Reads the waypoint with the given publish index if it is still retained.
  bool read(std::uint64_t index, Waypoint& out, unsigned retries = kDefaultRetryBudget) const noexcept;

  Bracket bracket(double t, unsigned retries = kDefaultRetryBudget) const noexcept;

 private:
  SeqlockCell<Waypoint> slot(std::size_t i) const noexcept;
  bool last_published(Waypoint& out) const noexcept;

  unsigned char* base_ = nullptr;
  RingGeometry geom_{};
};

}  // namespace lithe
