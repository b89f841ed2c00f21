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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lithe {

/// Role-to-core assignment. Defaults follow the four-domain split:
/// housekeeping 0, spine 1, brain 2, transport 3.
struct CoreMap {
  int housekeeping = 0;
  int spine = 1;
  int brain = 2;
  int transport = 3;
};

enum class Grade { A, B, C };
std::string_view grade_name(Grade g) noexcept;

struct PinRecord {
  std::string role;
  int core = -1;
  bool applied = false;
  std::string error;
};

struct IsolationReport {
  unsigned cores_detected = 0;
  std::optional<std::vector<int>> isolated_cores;  // nullopt: boot line unreadable
  std::vector<PinRecord> pinning;
  bool memory_locked = false;
  std::string memory_lock_error;
  std::string scheduler = "SCHED_OTHER";
  Grade grade = Grade::C;
};

unsigned detected_cores() noexcept;

/// Sets the calling thread's affinity to exactly {core}.
bool pin_current_thread(int core, std::string* error = nullptr);
bool set_current_thread_affinity(const std::vector<int>& cores, std::string* error = nullptr);
std::vector<int> current_thread_affinity();

/// mlockall(MCL_CURRENT | MCL_FUTURE); never aborts.
bool lock_process_memory(std::string* error = nullptr);

/// Opt-in SCHED_FIFO for the calling thread.
bool try_fifo_priority(int priority, std::string* error = nullptr);

/// CPUs named by the `isolcpus=` token of a kernel command line (flag words
/// such as `domain,` or `managed_irq,` are skipped; `N`, `N-M` and
/// `N-M:used/group` list items are expanded). Empty when the token is
/// absent. Sorted, unique.
std::vector<int> parse_isolcpus(std::string_view cmdline);

/// Composes the grade from what was applied.
Grade compute_grade(const IsolationReport& report, const CoreMap& map);

/// Collects pin results from role threads as they start.
class IsolationRecorder {
 public:
  explicit IsolationRecorder(CoreMap map = {});

  /// Pins the calling thread for `role` to `core` and records the outcome.
  bool pin(const std::string& role, int core);
  void set_memory_locked(bool locked, std::string error = {});
  void set_scheduler(std::string name);
  /// Reads /proc/cmdline unless `cmdline` is given.
  IsolationReport report(std::optional<std::string> cmdline = std::nullopt) const;
  const CoreMap& core_map() const noexcept { return map_; }

 private:
  CoreMap map_;
  mutable std::mutex mu_;
  std::vector<PinRecord> pins_;
  bool locked_ = false;
  std::string lock_error_;
  std::string scheduler_ = "SCHED_OTHER";
};

IsolationReport detect_environment(std::optional<std::string> cmdline = std::nullopt);

std::string report_json(const IsolationReport& report);

/// Major page faults of this process so far.
std::uint64_t major_page_faults() noexcept;

}  // namespace lithe
