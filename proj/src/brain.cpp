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

#include "lithe/brain.hpp"

#include <cmath>
#include <numbers>

namespace lithe {

Brain::Brain(WaypointRing ring, BrainConfig cfg) : ring_(ring), cfg_(cfg) {}

double Brain::reference(double t) const noexcept {
  return cfg_.offset + cfg_.amplitude * std::sin(2.0 * std::numbers::pi * cfg_.frequency * t);
}

void Brain::tick(double now_s) {
  std::lock_guard lock(mu_);
  if (!cfg_.enabled || now_s < frozen_until_) {
    return;
  }
  const double step = 1.0 / cfg_.rate;
  // After a freeze, resume on the grid point following now instead of
  // back-filling the gap.
  const double resume = (std::floor(now_s * cfg_.rate) + 1.0) * step;
  if (published_ > 0 && next_t_ < resume && next_t_ + cfg_.lookahead < now_s) {
    next_t_ = resume;
  }
  while (next_t_ <= now_s + cfg_.lookahead + 1e-12) {
    if (next_t_ > last_t_ &&
        ring_.publish({next_t_, reference(next_t_)}) == WaypointRing::PublishResult::ok) {
      last_t_ = next_t_;
      ++published_;
    }
    next_t_ = static_cast<double>(std::llround(next_t_ * cfg_.rate) + 1) * step;
  }
}

void Brain::freeze(double now_s, double duration_s) {
  std::lock_guard lock(mu_);
  frozen_until_ = now_s + duration_s;
}

bool Brain::frozen(double now_s) const {
  std::lock_guard lock(mu_);
  return now_s < frozen_until_;
}

double Brain::frozen_until() const {
  std::lock_guard lock(mu_);
  return frozen_until_;
}

void Brain::set_generator_enabled(bool enabled) {
  std::lock_guard lock(mu_);
  cfg_.enabled = enabled;
}

bool Brain::generator_enabled() const {
  std::lock_guard lock(mu_);
  return cfg_.enabled;
}

Brain::ExternalResult Brain::publish(const std::vector<Waypoint>& points, double now_s,
                                     std::size_t& accepted) {
  std::lock_guard lock(mu_);
  accepted = 0;
  if (now_s < frozen_until_) {
    return ExternalResult::frozen;
  }
  for (const auto& wp : points) {
    if (ring_.publish(wp) != WaypointRing::PublishResult::ok) {
      return ExternalResult::rejected;
    }
    last_t_ = wp.t;
    ++published_;
    ++accepted;
  }
  if (last_t_ >= next_t_) {
    next_t_ = last_t_;
  }
  return ExternalResult::ok;
}

std::uint64_t Brain::published() const {
  std::lock_guard lock(mu_);
  return published_;
}

double Brain::last_published_t() const {
  std::lock_guard lock(mu_);
  return last_t_;
}

}  // namespace lithe
