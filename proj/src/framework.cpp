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

#include "lithe/framework.hpp"

#include <bit>
#include <chrono>
#include <stdexcept>

namespace lithe {

namespace {

std::size_t pow2_at_least(std::size_t n) {
  return std::bit_ceil(n < 2 ? std::size_t{2} : n);
}

}  // namespace

void MetricsRecorder::reserve(std::size_t n) {
  std::lock_guard lock(mu_);
  rows_.reserve(n);
}

void MetricsRecorder::append(const TickMetrics& m) {
  std::lock_guard lock(mu_);
  if (limit_ != 0 && rows_.size() >= limit_) {
    // Keep the most recent half when a bounded recorder fills up.
    const std::size_t drop = rows_.size() / 2;
    rows_.erase(rows_.begin(), rows_.begin() + static_cast<std::ptrdiff_t>(drop));
    base_ += drop;
  }
  rows_.push_back(m);
}

std::size_t MetricsRecorder::size() const {
  std::lock_guard lock(mu_);
  return base_ + rows_.size();
}

std::vector<TickMetrics> MetricsRecorder::snapshot() const {
  std::lock_guard lock(mu_);
  return rows_;
}

std::vector<TickMetrics> MetricsRecorder::since(std::size_t from) const {
  std::lock_guard lock(mu_);
  const std::size_t start = from > base_ ? from - base_ : 0;
  if (start >= rows_.size()) {
    return {};
  }
  return {rows_.begin() + static_cast<std::ptrdiff_t>(start), rows_.end()};
}

std::optional<TickMetrics> MetricsRecorder::last() const {
  std::lock_guard lock(mu_);
  if (rows_.empty()) {
    return std::nullopt;
  }
  return rows_.back();
}

Framework::Framework(FrameworkConfig cfg)
    : cfg_(std::move(cfg)),
      segment_([&] {
        SegmentSpec spec = SegmentSpec::generated();
        spec.name = cfg_.segment_name;
        return cfg_.shared_segment ? Segment::create(spec, true) : Segment::anonymous(spec);
      }()),
      views_(SegmentViews::over(segment_.base())),
      metrics_(pow2_at_least(cfg_.metrics_capacity)),
      isolation_(cfg_.cores) {
  if (!cfg_.spine.valid()) {
    throw std::invalid_argument("invalid spine configuration");
  }
  if (!cfg_.plant.valid() ||
      cfg_.plant.substep > static_cast<double>(cfg_.spine.period_ns) * 1e-9 / 4.0) {
    throw std::invalid_argument("invalid plant configuration");
  }
  const unsigned cores = detected_cores();
  if (cfg_.wait == "auto") {
    spine_wait_ = default_wait_strategy(cores, true);
    transport_wait_ = default_wait_strategy(cores, false);
  } else {
    const auto w = parse_wait_strategy(cfg_.wait);
    if (!w) {
      throw std::invalid_argument("unknown wait strategy '" + cfg_.wait + "'");
    }
    spine_wait_ = *w;
    transport_wait_ = *w == WaitStrategy::hybrid ? WaitStrategy::hybrid_yield : *w;
  }
  const bool realtime = cfg_.mode == ClockMode::realtime;
  const bool blocking_transport = realtime && cores < 4;
  if (realtime) {
    spine_tb_ = std::make_unique<RealtimeTimebase>(spine_wait_);
    transport_tb_ = std::make_unique<RealtimeTimebase>(transport_wait_);
  } else {
    auto lt = std::make_unique<LockstepTimebase>(0);
    lockstep_ = lt.get();
    spine_tb_ = std::move(lt);
  }
  views_.state.write({cfg_.initial_plant.theta, cfg_.initial_plant.omega, 0.0, 0, 0});
  transport_ = std::make_unique<TransportStage>(cfg_.bus, cfg_.plant, cfg_.spine.period_ns, hs_,
                                                views_.state);
  transport_->set_initial_state(cfg_.initial_plant);
  if (cfg_.transport_trace > 0) {
    transport_->enable_trace(cfg_.transport_trace);
  }
  if (lockstep_ != nullptr) {
    lockstep_->set_agent(transport_.get());
  }
  spine_ = std::make_unique<Spine>(cfg_.spine, views_, hs_, active_, *spine_tb_, &metrics_,
                                   blocking_transport);
  brain_ = std::make_unique<Brain>(ring(), cfg_.brain);
  if (cfg_.loader.housekeeping_cores.empty() ||
      (cfg_.loader.housekeeping_cores.size() == 1 && cfg_.loader.housekeeping_cores[0] == 0)) {
    cfg_.loader.housekeeping_cores = {cfg_.cores.housekeeping};
  }
  loader_ = std::make_unique<Loader>(
      cfg_.loader, active_,
      CycleSource{[this] { return spine_->executed_cycles(); }, [this] { return spine_->running(); }});
  recorder_.set_limit(cfg_.record_limit);
}

Framework::~Framework() {
  stop();
}

std::uint64_t Framework::add_metrics_listener(MetricsListener l) {
  std::lock_guard lock(listeners_mu_);
  const std::uint64_t id = next_listener_++;
  listeners_.emplace_back(id, std::move(l));
  return id;
}

void Framework::remove_metrics_listener(std::uint64_t id) {
  // Taking drain_mu_ guarantees the listener is not running when this returns.
  std::lock_guard drain_lock(drain_mu_);
  std::lock_guard lock(listeners_mu_);
  std::erase_if(listeners_, [id](const auto& e) { return e.first == id; });
}

void Framework::drain() {
  std::lock_guard drain_lock(drain_mu_);
  TickMetrics m;
  std::vector<std::pair<std::uint64_t, MetricsListener>> ls;
  {
    std::lock_guard lock(listeners_mu_);
    ls = listeners_;
  }
  while (metrics_.pop(m)) {
    recorder_.append(m);
    for (const auto& [id, l] : ls) {
      l(m);
    }
  }
}

void Framework::start() {
  if (started_) {
    return;
  }
  started_ = true;
  if (cfg_.lock_memory) {
    std::string err;
    const bool ok = lock_process_memory(&err);
    isolation_.set_memory_locked(ok, err);
  }
  loader_->start();
  if (cfg_.mode == ClockMode::lockstep) {
    spine_->start(0);
    spine_->set_running(false);
    return;
  }
  const bool blocking = detected_cores() < 4;
  transport_thread_ = std::thread([this, blocking] {
    isolation_.pin("transport", cfg_.cores.transport);
    if (cfg_.fifo_priority) {
      // Same level as the Spine so its yielding handoff wait can hand the
      // core to the transport.
      try_fifo_priority(cfg_.fifo_level);
    }
    transport_->run(*transport_tb_, stop_, blocking);
  });
  // Leave time for the other threads to come up before cycle 0.
  const std::int64_t t0 = monotonic_ns() + 20'000'000;
  spine_->start(t0);
  spine_thread_ = std::thread([this] {
    isolation_.pin("spine", cfg_.cores.spine);
    if (cfg_.fifo_priority) {
      std::string err;
      if (try_fifo_priority(cfg_.fifo_level, &err)) {
        isolation_.set_scheduler("SCHED_FIFO");
      } else {
        isolation_.set_scheduler("SCHED_OTHER (" + err + ")");
      }
    }
    spine_->run(stop_spine_);
  });
  brain_thread_ = std::thread([this] {
    isolation_.pin("brain", cfg_.cores.brain);
    auto next = std::chrono::steady_clock::now();
    while (!stop_.load(std::memory_order_acquire)) {
      brain_->tick(now_s());
      next += std::chrono::milliseconds(1);
      std::this_thread::sleep_until(next);
    }
  });
  drain_thread_ = std::thread([this] {
    isolation_.pin("housekeeping", cfg_.cores.housekeeping);
    while (!stop_.load(std::memory_order_acquire)) {
      drain();
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
}

void Framework::stop() {
  if (!started_) {
    return;
  }
  started_ = false;
  stop_spine_.store(true, std::memory_order_release);
  if (spine_thread_.joinable()) {
    spine_thread_.join();
  }
  spine_->set_running(false);
  stop_.store(true, std::memory_order_release);
  transport_->wake();
  for (auto* t : {&transport_thread_, &brain_thread_, &drain_thread_}) {
    if (t->joinable()) {
      t->join();
    }
  }
  drain();
  loader_->stop();
}

double Framework::now_s() const {
  if (lockstep_ != nullptr) {
    return static_cast<double>(lockstep_->now() - spine_->t0_ns()) * 1e-9;
  }
  return static_cast<double>(monotonic_ns() - spine_->t0_ns()) * 1e-9;
}

void Framework::lockstep_step() {
  const std::uint64_t k = spine_->next_cycle();
  brain_->tick(spine_->cycle_time(k));
  spine_->step();
  drain();
}

void Framework::run_cycles(std::uint64_t n) {
  if (lockstep_ == nullptr) {
    throw std::logic_error("run_cycles requires the lockstep clock");
  }
  spine_->set_running(true);
  for (std::uint64_t i = 0; i < n; ++i) {
    lockstep_step();
  }
  spine_->set_running(false);
}

void Framework::advance_to(double t_s) {
  if (lockstep_ != nullptr) {
    spine_->set_running(true);
    while (spine_->cycle_time(spine_->next_cycle()) < t_s - 1e-12) {
      lockstep_step();
    }
    spine_->set_running(false);
    return;
  }
  const double now = now_s();
  if (t_s > now) {
    std::this_thread::sleep_for(std::chrono::duration<double>(t_s - now));
  }
}

BuildTicket Framework::swap_to(ControllerSource src, double timeout_s) {
  const std::string name = src.name;
  const auto sub = loader_->submit(std::move(src));
  if (!sub.ok) {
    BuildTicket t;
    t.name = name;
    t.stage = BuildStage::failed;
    t.error = sub.error;
    return t;
  }
  if (lockstep_ != nullptr) {
    auto t = loader_->wait_for(sub.ticket, BuildStage::published, timeout_s);
    if (!t || t->stage != BuildStage::published) {
      return t ? *t : BuildTicket{};
    }
    // The exchange happens at the end of the next cycle.
    run_cycles(1);
  }
  auto t = loader_->wait_for(sub.ticket, BuildStage::active, timeout_s);
  return t ? *t : BuildTicket{};
}

}  // namespace lithe
