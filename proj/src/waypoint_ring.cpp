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

#include "lithe/waypoint_ring.hpp"

#include <atomic>
#include <cmath>

namespace lithe {

namespace {

std::atomic_ref<std::uint64_t> head_ref(unsigned char* base) noexcept {
  return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(base));
}

Waypoint reflect(const Waypoint& pivot, const Waypoint& other) noexcept {
  return {2.0 * pivot.t - other.t, 2.0 * pivot.position - other.position};
}

}  // namespace

WaypointRing::WaypointRing(unsigned char* ring_base, RingGeometry geometry) noexcept
    : base_(ring_base), geom_(geometry) {}

SeqlockCell<Waypoint> WaypointRing::slot(std::size_t i) const noexcept {
  unsigned char* s = base_ + geom_.slots_offset + i * geom_.slot_stride;
  return SeqlockCell<Waypoint>(s, s + geom_.slot_payload_offset);
}

std::uint64_t WaypointRing::head() const noexcept {
  return head_ref(base_).load(std::memory_order_acquire);
}

bool WaypointRing::read(std::uint64_t index, Waypoint& out, unsigned retries) const noexcept {
  const auto cell = slot(slot_of(index, geom_.capacity));
  const auto r = cell.read(retries);
  if (!r.ok) {
    return false;
  }
  // The slot's counter says which lap wrote it: after n writes it is 2n, and
  // write n carries publish index slot + (n - 1) * capacity.
  const std::uint64_t seq = r.seq;
  if (seq < 2) {
    return false;
  }
  const std::uint64_t lap = seq / 2 - 1;
  if (slot_of(index, geom_.capacity) + lap * geom_.capacity != index) {
    return false;
  }
  out = r.value;
  return true;
}

bool WaypointRing::last_published(Waypoint& out) const noexcept {
  const std::uint64_t h = head();
  return h != 0 && read(h - 1, out);
}

WaypointRing::PublishResult WaypointRing::publish(const Waypoint& wp) noexcept {
  if (!std::isfinite(wp.t) || !std::isfinite(wp.position)) {
    return PublishResult::non_finite;
  }
  auto head = head_ref(base_);
  const std::uint64_t h = head.load(std::memory_order_relaxed);
  if (h != 0) {
    const auto last = slot(slot_of(h - 1, geom_.capacity)).read();
    if (last.ok && !(wp.t > last.value.t)) {
      return PublishResult::non_monotone;
    }
  }
  slot(slot_of(h, geom_.capacity)).write(wp);
  head.store(h + 1, std::memory_order_release);
  return PublishResult::ok;
}

Bracket WaypointRing::bracket(double t, unsigned retries) const noexcept {
  Bracket b;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::uint64_t h = head();
    b.published = h;
    if (h == 0) {
      b.kind = Bracket::Kind::no_data;
      return b;
    }
    Waypoint newest;
    if (!read(h - 1, newest, retries)) {
      continue;
    }
    b.newest = newest;
    const std::uint64_t lo = h > geom_.capacity ? h - geom_.capacity : 0;
    const std::uint64_t hi = h - 1;
    if (h < 4 || t > newest.t) {
      b.kind = Bracket::Kind::hold_last;
      b.points.fill(newest);
      return b;
    }
    Waypoint oldest;
    // The oldest slot is the next to be overwritten; skip it if the
    // producer has already lapped it.
    std::uint64_t first = lo;
    if (!read(first, oldest, retries)) {
      ++first;
      if (first >= hi || !read(first, oldest, retries)) {
        continue;
      }
    }
    // Largest j in [first, hi - 1] with wp_j.t <= t.
    std::uint64_t j = first;
    Waypoint pj = oldest;
    bool failed = false;
    if (t < oldest.t) {
      b.before_oldest = true;
    } else {
      std::uint64_t a = first;
      std::uint64_t z = hi;  // wp_z.t >= t holds for z = hi
      while (z - a > 1) {
        const std::uint64_t mid = a + (z - a) / 2;
        Waypoint m;
        if (!read(mid, m, retries)) {
          failed = true;
          break;
        }
        if (m.t <= t) {
          a = mid;
          pj = m;
        } else {
          z = mid;
        }
      }
      j = a;
      if (!failed && j != first && !read(j, pj, retries)) {
        failed = true;
      }
    }
    Waypoint p2;
    if (failed || !read(j + 1, p2, retries)) {
      continue;
    }
    b.points[1] = pj;
    b.points[2] = p2;
    b.index[1] = static_cast<std::int64_t>(j);
    b.index[2] = static_cast<std::int64_t>(j + 1);
    if (j > first && read(j - 1, b.points[0], retries)) {
      b.index[0] = static_cast<std::int64_t>(j - 1);
    } else {
      b.points[0] = reflect(pj, p2);
    }
    if (j + 2 <= hi && read(j + 2, b.points[3], retries)) {
      b.index[3] = static_cast<std::int64_t>(j + 2);
    } else {
      b.points[3] = reflect(p2, pj);
    }
    b.kind = Bracket::Kind::interpolate;
    return b;
  }
  // Lapped twice in a row: fall back to the newest known point.
  b.kind = b.published == 0 ? Bracket::Kind::no_data : Bracket::Kind::hold_last;
  b.points.fill(b.newest);
  return b;
}

}  // namespace lithe
