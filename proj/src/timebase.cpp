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

#include "lithe/timebase.hpp"

#include <sched.h>
#include <time.h>

#include <algorithm>
#include <cerrno>

#include "lithe/seqlock.hpp"

namespace lithe {

std::int64_t monotonic_ns() noexcept {
  timespec ts{};
  ::clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

std::optional<WaitStrategy> parse_wait_strategy(std::string_view name) noexcept {
  if (name == "spin") return WaitStrategy::spin;
  if (name == "yield") return WaitStrategy::yield;
  if (name == "hybrid") return WaitStrategy::hybrid;
  if (name == "hybrid_yield") return WaitStrategy::hybrid_yield;
  return std::nullopt;
}

std::string_view wait_strategy_name(WaitStrategy s) noexcept {
  switch (s) {
    case WaitStrategy::spin:
      return "spin";
    case WaitStrategy::yield:
      return "yield";
    case WaitStrategy::hybrid:
      return "hybrid";
    case WaitStrategy::hybrid_yield:
      return "hybrid_yield";
  }
  return "?";
}

WaitStrategy default_wait_strategy(unsigned cores, bool spine_role) noexcept {
  if (cores >= 4) {
    return WaitStrategy::spin;
  }
  return spine_role ? WaitStrategy::hybrid : WaitStrategy::hybrid_yield;
}

WaitResult RealtimeTimebase::wait_until(std::int64_t deadline_ns) noexcept {
  std::int64_t t = monotonic_ns();
  if (t >= deadline_ns) {
    return {t, true};
  }
  if (strategy_ == WaitStrategy::hybrid || strategy_ == WaitStrategy::hybrid_yield) {
    const std::int64_t wake = deadline_ns - slack_ns_;
    if (t < wake) {
      timespec ts{static_cast<time_t>(wake / 1'000'000'000), static_cast<long>(wake % 1'000'000'000)};
      while (::clock_nanosleep(CLOCK_MONOTONIC, TIMER_ABSTIME, &ts, nullptr) == EINTR) {
      }
    }
  }
  const bool yield = strategy_ == WaitStrategy::yield || strategy_ == WaitStrategy::hybrid_yield;
  while ((t = monotonic_ns()) < deadline_ns) {
    if (yield) {
      ::sched_yield();
    } else {
      cpu_relax();
    }
  }
  return {t, false};
}

void RealtimeTimebase::relax() noexcept {
  if (strategy_ == WaitStrategy::spin) {
    cpu_relax();
  } else {
    ::sched_yield();
  }
}

void LockstepTimebase::run_due(std::int64_t until) noexcept {
  if (agent_ == nullptr) {
    return;
  }
  for (;;) {
    const std::int64_t e = agent_->next_event_ns();
    if (e > until) {
      break;
    }
    now_ = std::max(now_, e);
    agent_->service(now_);
  }
}

WaitResult LockstepTimebase::wait_until(std::int64_t deadline_ns) noexcept {
  if (now_ >= deadline_ns) {
    run_due(now_);
    return {now_, true};
  }
  run_due(deadline_ns);
  now_ = std::max(now_, deadline_ns);
  return {now_, false};
}

void LockstepTimebase::relax() noexcept {
  run_due(now_);
  now_ += quantum_;
  run_due(now_);
}

void LockstepTimebase::advance(std::int64_t ns) noexcept {
  run_due(now_ + ns);
  now_ += ns;
}

}  // namespace lithe
