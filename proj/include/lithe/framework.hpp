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

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lithe/brain.hpp"
#include "lithe/controller.hpp"
#include "lithe/isolation.hpp"
#include "lithe/loader.hpp"
#include "lithe/metrics.hpp"
#include "lithe/plant.hpp"
#include "lithe/segment.hpp"
#include "lithe/spine.hpp"
#include "lithe/spsc_queue.hpp"
#include "lithe/timebase.hpp"
#include "lithe/transport.hpp"

namespace lithe {

/// realtime: one thread per domain on the monotonic clock.
/// lockstep: the caller's thread drives Spine, Transport and Brain on a
/// virtual clock; runs are bit-reproducible. The loader always compiles in
/// real time; in lockstep the virtual clock is frozen while a swap waits
/// for it.
enum class ClockMode { realtime, lockstep };

struct FrameworkConfig {
  ClockMode mode = ClockMode::realtime;
  SpineConfig spine;
  PlantParams plant;
  PlantState initial_plant;
  BusModel bus;
  BrainConfig brain;
  CoreMap cores;
  LoaderConfig loader;
  std::string wait = "auto";  // spin | yield | hybrid | auto
  bool lock_memory = true;
  bool fifo_priority = false;
  int fifo_level = 80;
  bool shared_segment = false;
  std::string segment_name = gen::kSegmentName;
  std::size_t metrics_capacity = 1U << 14;
  std::size_t transport_trace = 0;  // exchange records to pre-reserve
  std::size_t record_limit = 0;     // 0: keep every TickMetrics
};

/// Everything the Spine published, in cycle order.
class MetricsRecorder {
 public:
  void reserve(std::size_t n);
  void set_limit(std::size_t n) { limit_ = n; }
  void append(const TickMetrics& m);
  std::size_t size() const;
  std::vector<TickMetrics> snapshot() const;
  /// Records with index >= from (index in append order).
  std::vector<TickMetrics> since(std::size_t from) const;
  std::optional<TickMetrics> last() const;

 private:
  mutable std::mutex mu_;
  std::vector<TickMetrics> rows_;
  std::size_t limit_ = 0;
  std::size_t base_ = 0;
};

class Framework {
 public:
  using MetricsListener = std::function<void(const TickMetrics&)>;

  explicit Framework(FrameworkConfig cfg);
  ~Framework();
  Framework(const Framework&) = delete;
  Framework& operator=(const Framework&) = delete;

  void start();
  void stop();
  bool started() const noexcept { return started_; }

  /// lockstep: executes cycles until the spine clock reaches t.
  /// realtime: sleeps until then.
  void advance_to(double t_s);
  void advance_by(double dt_s) { advance_to(now_s() + dt_s); }
  /// lockstep only: executes n cycles.
  void run_cycles(std::uint64_t n);
  /// Seconds on the trajectory clock (0 at the release of cycle 0).
  double now_s() const;

  /// Submits a controller and returns once it is active or has failed.
  BuildTicket swap_to(ControllerSource src, double timeout_s = 300.0);

  /// Moves queued TickMetrics into the recorder and listeners.
  void drain();
  std::uint64_t add_metrics_listener(MetricsListener l);
  void remove_metrics_listener(std::uint64_t id);

  const FrameworkConfig& config() const noexcept { return cfg_; }
  Spine& spine() noexcept { return *spine_; }
  TransportStage& transport() noexcept { return *transport_; }
  Brain& brain() noexcept { return *brain_; }
  Loader& loader() noexcept { return *loader_; }
  ActiveController& active() noexcept { return active_; }
  MetricsRecorder& recorder() noexcept { return recorder_; }
  SegmentViews views() const noexcept { return views_; }
  WaypointRing ring() const noexcept { return WaypointRing(views_.ring_base, RingGeometry::generated()); }
  Handshake& handshake() noexcept { return hs_; }
  IsolationReport isolation_report() const { return isolation_.report(); }
  WaitStrategy spine_wait() const noexcept { return spine_wait_; }

 private:
  void lockstep_step();

  FrameworkConfig cfg_;
  Segment segment_;
  SegmentViews views_;
  Handshake hs_;
  ActiveController active_;
  SpscQueue<TickMetrics> metrics_;
  MetricsRecorder recorder_;
  IsolationRecorder isolation_;
  WaitStrategy spine_wait_;
  WaitStrategy transport_wait_;
  std::unique_ptr<Timebase> spine_tb_;
  std::unique_ptr<Timebase> transport_tb_;
  LockstepTimebase* lockstep_ = nullptr;
  std::unique_ptr<TransportStage> transport_;
  std::unique_ptr<Spine> spine_;
  std::unique_ptr<Brain> brain_;
  std::unique_ptr<Loader> loader_;

  std::mutex listeners_mu_;
  std::vector<std::pair<std::uint64_t, MetricsListener>> listeners_;
  std::uint64_t next_listener_ = 1;
  std::mutex drain_mu_;

  bool started_ = false;
  std::atomic<bool> stop_{false};
  std::atomic<bool> stop_spine_{false};
  std::thread spine_thread_;
  std::thread transport_thread_;
  std::thread brain_thread_;
  std::thread drain_thread_;
};

}  // namespace lithe
