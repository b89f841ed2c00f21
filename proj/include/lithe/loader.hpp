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
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lithe/controller.hpp"
#include "lithe/templates.hpp"

namespace lithe {

/// queued -> compiling -> loading -> verifying -> published -> active, or
/// failed from any of them.
enum class BuildStage { queued, compiling, loading, verifying, published, active, failed };
std::string_view stage_name(BuildStage s) noexcept;

struct StageTimings {
  double compile_s = 0.0;
  double load_s = 0.0;
  double verify_s = 0.0;
  double publish_s = 0.0;   // verified -> pending installed
  double activate_s = 0.0;  // pending installed -> Spine exchanged
};

struct BuildTicket {
  std::uint64_t id = 0;
  std::string name;
  std::uint32_t controller_id = 0;
  BuildStage stage = BuildStage::queued;
  std::string error;        // one-line reason when failed
  std::string diagnostics;  // compiler output
  StageTimings timings;
  std::uint64_t activation_cycle = 0;
  std::filesystem::path dir;
};

struct LoaderConfig {
  std::filesystem::path work_dir = ".lithe-build";
  std::string compiler;                    // empty: the toolchain that built lithe
  std::vector<std::string> include_dirs;   // empty: the built-in plugin include path
  std::vector<std::string> flags = {"-std=c++20", "-O2", "-fPIC", "-shared"};
  std::vector<int> housekeeping_cores = {0};
  int nice = 10;
  bool idle_priority = true;  // SCHED_IDLE for the loader thread and its children
  double compile_timeout_s = 120.0;
  std::size_t queue_capacity = 4;
  std::uint32_t grace_cycles = 10;
  std::uint64_t expected_layout_hash = 0;  // 0: the generated constant
};

/// A dlopen'ed and verified controller.
struct ControllerHandle {
  enum class State { loaded, published, active, retiring, unloaded };
  std::uint32_t id = 0;
  std::string name;
  std::uint32_t abi_version = 0;
  std::uint64_t layout_hash = 0;
  void* library = nullptr;
  State state = State::loaded;
  ControllerSlot slot;
  std::filesystem::path artifact;
};

enum class LoadError { none, open_failed, missing_symbol, abi_mismatch, layout_mismatch };

struct LoadResult {
  std::unique_ptr<ControllerHandle> handle;
  LoadError error = LoadError::none;
  std::string message;
};

/// Opens `artifact`, resolves lithe_abi / lithe_control and checks them.
/// On any failure the library is closed again.
LoadResult load_and_verify(const std::filesystem::path& artifact, std::uint64_t expected_hash,
                           std::uint32_t id);
/// dlclose; a failing close is reported and the handle deliberately leaked.
bool unload(ControllerHandle& handle, std::string* error = nullptr);

struct SubprocessResult {
  bool started = false;
  bool timed_out = false;
  int exit_code = -1;
  std::string output;  // combined stdout and stderr
};

/// Runs argv[0] (absolute path or found on PATH) with stdout and stderr sent
/// to `log`, inheriting the calling thread's CPU affinity and nice value.
SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::filesystem::path& log, double timeout_s);

/// Observes Spine progress for activation and retirement.
struct CycleSource {
  std::function<std::uint64_t()> executed_cycles;
  std::function<bool()> running;
};

/// Compiles, loads, verifies and publishes controllers on its own thread,
/// then retires the controllers they replace once the Spine has run
/// `grace_cycles` with the successor. Tickets are processed one at a time
/// in submission order.
class Loader {
 public:
  using Listener = std::function<void(const BuildTicket&)>;

  Loader(LoaderConfig cfg, ActiveController& active, CycleSource cycles);
  ~Loader();
  Loader(const Loader&) = delete;
  Loader& operator=(const Loader&) = delete;

  void start();
  void stop();

  struct Submitted {
    bool ok = false;
    std::uint64_t ticket = 0;
    std::string error;
  };
  Submitted submit(ControllerSource src);

  std::optional<BuildTicket> ticket(std::uint64_t id) const;
  /// Blocks until the ticket reaches `stage` (or a later one) or fails.
  /// Returns the ticket state observed last.
  std::optional<BuildTicket> wait_for(std::uint64_t id, BuildStage stage, double timeout_s) const;
  /// Waits until no ticket is queued or in flight and all retirements are done.
  bool wait_idle(double timeout_s) const;

  void set_listener(Listener l);

  std::size_t live_libraries() const noexcept { return live_.load(); }
  std::size_t max_live_libraries() const noexcept { return max_live_.load(); }
  std::uint64_t unloaded_count() const noexcept { return unloaded_.load(); }
  /// "<ticket>:<stage>" in the order transitions happened.
  std::vector<std::string> stage_log() const;
  const LoaderConfig& config() const noexcept { return cfg_; }
  /// Seconds between activation and dlclose of the outgoing controller, per
  /// retirement.
  std::vector<double> retire_delays() const;

 private:
  struct Job {
    std::uint64_t ticket;
    ControllerSource src;
  };

  void thread_main();
  void process(Job& job);
  void set_stage(std::uint64_t id, BuildStage stage, const std::function<void(BuildTicket&)>& edit);
  void drain_retired(bool force);
  bool stopping() const noexcept { return stop_.load(std::memory_order_acquire); }

  LoaderConfig cfg_;
  ActiveController& active_;
  CycleSource cycles_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::deque<Job> queue_;
  std::vector<BuildTicket> tickets_;
  std::vector<std::string> stage_log_;
  std::vector<double> retire_delays_;
  bool busy_ = false;
  Listener listener_;

  std::vector<std::unique_ptr<ControllerHandle>> handles_;  // loader thread only
  struct Retiring {
    ControllerHandle* handle;
    std::uint64_t successor_activation_executed;
    double activated_at;
  };
  std::vector<Retiring> retiring_;  // loader thread only
  std::uint32_t next_id_ = 1;

  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> live_{0};
  std::atomic<std::size_t> max_live_{0};
  std::atomic<std::uint64_t> unloaded_{0};
  std::thread thread_;
};

}  // namespace lithe
