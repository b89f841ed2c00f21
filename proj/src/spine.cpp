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

#include "lithe/spine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lithe/alloc_guard.hpp"

namespace lithe {

namespace {

std::int32_t saturate_i32(std::int64_t v) noexcept {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(
      v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
}

}  // namespace

std::optional<MissPolicy> parse_miss_policy(std::string_view name) noexcept {
  if (name == "skip") return MissPolicy::skip;
  if (name == "estop") return MissPolicy::estop;
  return std::nullopt;
}

Spine::Spine(const SpineConfig& cfg, SegmentViews views, Handshake& hs, ActiveController& active,
             Timebase& tb, SpscQueue<TickMetrics>* metrics, bool notify_transport)
    : cfg_(cfg),
      views_(views),
      ring_(views.ring_base, RingGeometry::generated()),
      hs_(hs),
      active_(active),
      tb_(tb),
      metrics_(metrics),
      notify_(notify_transport),
      dt_(static_cast<double>(cfg.period_ns) * 1e-9),
      handoff_timeout_(cfg.handoff_timeout_ns > 0 ? cfg.handoff_timeout_ns : cfg.period_ns / 2) {
  handed_ = hs.handed();
}

void Spine::start(std::int64_t t0_ns) noexcept {
  t0_ = t0_ns;
  seq_ = hs_.cmd_seq.load(std::memory_order_relaxed);
  last_fb_seq_ = hs_.fb_seq.load(std::memory_order_acquire);
  no_progress_ = 0;
  handed_cmd_ = {0.0, kModeTorque};
  views_.command.write(handed_cmd_);
  next_.store(0, std::memory_order_release);
  running_.store(true, std::memory_order_release);
}

void Spine::request_estop() noexcept {
  estop_request_.store(true, std::memory_order_release);
}

void Spine::latch_estop(EstopReason why) noexcept {
  if (!estop_.exchange(true, std::memory_order_acq_rel)) {
    estop_reason_.store(static_cast<std::uint32_t>(why), std::memory_order_release);
  }
}

void Spine::step() noexcept {
  alloc_guard::Scope no_alloc;
  const std::int64_t period = cfg_.period_ns;
  std::uint64_t k = next_.load(std::memory_order_relaxed);
  std::int64_t release_at = t0_ + static_cast<std::int64_t>(k) * period;
  std::uint16_t flags = 0;

  const WaitResult w = tb_.wait_until(release_at);
  const std::int64_t release = w.woke_ns;
  if (release - release_at >= period) {
    // Woken a full period late: releases that already elapsed are missed.
    const auto late = static_cast<std::uint64_t>((release - release_at) / period);
    k += late;
    release_at += static_cast<std::int64_t>(late) * period;
    missed_.fetch_add(late, std::memory_order_relaxed);
    flags |= kTickMissed;
    if (cfg_.miss_policy == MissPolicy::estop) {
      latch_estop(EstopReason::deadline_miss);
    }
  }
  if (estop_request_.load(std::memory_order_acquire)) {
    latch_estop(EstopReason::external);
  }

  // (2) hand u_k to the transport.
  const std::uint64_t seq = ++seq_;
  handed_.write({seq, k, handed_cmd_});
  hs_.cmd_seq.store(seq, std::memory_order_release);
  if (notify_) {
    hs_.doorbell.fetch_add(1, std::memory_order_release);
    hs_.doorbell.notify_one();
  }
  while (hs_.staged_seq.load(std::memory_order_acquire) != seq) {
    if (tb_.now() - release > handoff_timeout_) {
      flags |= kTickTransportLate;
      break;
    }
    tb_.relax();
  }
  const std::int64_t staged = tb_.now();

  // (3) feedback x_k.
  const std::int64_t c0 = staged;
  const auto fb = views_.state.read(cfg_.retry_budget);
  if (fb.ok) {
    last_state_ = fb.value;
  } else {
    flags |= kTickFeedbackTorn;
  }
  const gen::RobotState& x = last_state_;
  const std::uint64_t fb_seq = hs_.fb_seq.load(std::memory_order_acquire);
  if (fb_seq == last_fb_seq_) {
    if (++no_progress_ >= cfg_.transport_dead_cycles) {
      latch_estop(EstopReason::transport_dead);
    }
  } else {
    no_progress_ = 0;
    last_fb_seq_ = fb_seq;
  }

  // (4) r_{k+1}.
  const SetpointSample sp =
      sample_setpoint(ring_, cycle_time(k + 1), cfg_.stale_threshold, cfg_.retry_budget);
  if (sp.stale) {
    flags |= kTickStale;
  }

  // (5) u_{k+1}.
  const ControllerSlot* ctrl = active_.current();
  gen::ActuatorCommand cmd{0.0, kModeTorque};
  if (estop_.load(std::memory_order_relaxed)) {
    cmd.mode = kModeEstop;
  } else if (sp.source == SetpointSample::Source::no_data) {
    flags |= kTickNoData;
  } else {
    gen::ActuatorCommand out{0.0, kModeTorque};
    const std::int32_t status =
        ctrl->entry(&x, sp.position, sp.velocity_ff, dt_, views_.persistent, &out);
    if (status != 0) {
      cmd = {0.0, kModeSafeZero};
      flags |= kTickControllerFault;
    } else {
      const SafetyOutcome safe = apply_safety(out, x, cfg_.safety);
      cmd = safe.command;
      if (safe.events & kSafetyNonFinite) {
        flags |= kTickControllerFault;
      }
      if (safe.events & kSafetyClamped) {
        flags |= kTickClamped;
        clamps_.fetch_add(1, std::memory_order_relaxed);
      }
      if (safe.events & kSafetyVelocityLimited) {
        flags |= kTickVelocityLimited;
      }
    }
    if (flags & kTickControllerFault) {
      faults_.fetch_add(1, std::memory_order_relaxed);
      if (cfg_.estop_on_controller_fault) {
        latch_estop(EstopReason::controller_fault);
        cmd = {0.0, kModeEstop};
      }
    }
  }
  // (6)
  views_.command.write(cmd);
  handed_cmd_ = cmd;
  const std::int64_t computed = tb_.now();

  // (7)
  if (active_.swap_check(k)) {
    flags |= kTickSwapped;
  }
  if (estop_.load(std::memory_order_relaxed)) {
    flags |= kTickEstop;
  }

  const std::int64_t next_release = release_at + period;
  const std::int64_t end = tb_.now();
  std::uint64_t next = k + 1;
  if (end > next_release) {
    const auto skipped = static_cast<std::uint64_t>((end - next_release + period - 1) / period);
    next += skipped;
    missed_.fetch_add(skipped, std::memory_order_relaxed);
    overruns_.fetch_add(1, std::memory_order_relaxed);
    flags |= kTickMissed;
    if (cfg_.miss_policy == MissPolicy::estop) {
      latch_estop(EstopReason::deadline_miss);
    }
  }

  if (metrics_ != nullptr) {
    TickMetrics m;
    m.cycle = k;
    m.scheduled_release_ns = release_at;
    m.release_jitter_ns = saturate_i32(release - release_at);
    m.handoff_ns = saturate_i32(staged - release);
    m.compute_ns = saturate_i32(computed - c0);
    m.controller_id = ctrl->id;
    m.flags = flags;
    m.feedback_age = fb_seq == 0 ? std::uint16_t{0xFFFF}
                                 : static_cast<std::uint16_t>(std::min<std::uint64_t>(
                                       k >= x.cycle ? k - x.cycle : 0, 0xFFFE));
    m.omega = static_cast<float>(x.velocity);
    m.theta = x.position;
    m.setpoint = sp.position;
    m.torque = cmd.torque;
    if (!metrics_->push(m)) {
      dropped_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  executed_.fetch_add(1, std::memory_order_release);
  next_.store(next, std::memory_order_release);
}

void Spine::run(const std::atomic<bool>& stop) noexcept {
  running_.store(true, std::memory_order_release);
  while (!stop.load(std::memory_order_acquire)) {
    step();
  }
  running_.store(false, std::memory_order_release);
}

}  // namespace lithe
