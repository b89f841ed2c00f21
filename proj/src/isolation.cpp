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

#include "lithe/isolation.hpp"

#include <pthread.h>
#include <sched.h>
#include <sys/mman.h>
#include <sys/resource.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lithe {

namespace {

std::optional<std::string> read_proc_cmdline() {
  std::ifstream in("/proc/cmdline");
  if (!in) {
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool parse_int(std::string_view s, int& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

void expand_item(std::string_view item, std::set<int>& out) {
  // N | N-M | N-M:used/group
  int used = 0;
  int group = 0;
  const auto colon = std::find(item.begin(), item.end(), ':');
  const std::string_view range(item.begin(), colon);
  if (colon != item.end()) {
    const std::string_view spec(colon + 1, item.end());
    const auto slash = std::find(spec.begin(), spec.end(), '/');
    if (slash == spec.end() || !parse_int({spec.begin(), slash}, used) ||
        !parse_int({slash + 1, spec.end()}, group) || used <= 0 || group <= 0) {
      return;
    }
  }
  const auto dash_it = std::find(range.begin(), range.end(), '-');
  const auto dash = dash_it == range.end() ? std::string_view::npos
                                           : static_cast<std::size_t>(dash_it - range.begin());
  int lo = 0;
  int hi = 0;
  if (dash == std::string_view::npos) {
    if (!parse_int(range, lo)) {
      return;
    }
    hi = lo;
  } else if (!parse_int(range.substr(0, dash), lo) || !parse_int(range.substr(dash + 1), hi) ||
             hi < lo) {
    return;
  }
  for (int c = lo; c <= hi; ++c) {
    if (group == 0 || (c - lo) % group < used) {
      out.insert(c);
    }
  }
}

std::string errno_text(const char* what, int err) {
  return std::string(what) + ": " + std::strerror(err);
}

}  // namespace

std::string_view grade_name(Grade g) noexcept {
  switch (g) {
    case Grade::A:
      return "A";
    case Grade::B:
      return "B";
    case Grade::C:
      return "C";
  }
  return "?";
}

unsigned detected_cores() noexcept {
  const long n = ::sysconf(_SC_NPROCESSORS_ONLN);
  return n > 0 ? static_cast<unsigned>(n) : 1U;
}

bool set_current_thread_affinity(const std::vector<int>& cores, std::string* error) {
  const unsigned n = detected_cores();
  cpu_set_t set;
  CPU_ZERO(&set);
  for (const int c : cores) {
    if (c < 0 || static_cast<unsigned>(c) >= n || c >= CPU_SETSIZE) {
      if (error != nullptr) {
        *error = "core " + std::to_string(c) + " not available (" + std::to_string(n) +
                 " detected)";
      }
      return false;
    }
    CPU_SET(c, &set);
  }
  const int rc = ::pthread_setaffinity_np(::pthread_self(), sizeof set, &set);
  if (rc != 0) {
    if (error != nullptr) {
      *error = errno_text("pthread_setaffinity_np", rc);
    }
    return false;
  }
  return true;
}

bool pin_current_thread(int core, std::string* error) {
  return set_current_thread_affinity({core}, error);
}

std::vector<int> current_thread_affinity() {
  cpu_set_t set;
  CPU_ZERO(&set);
  std::vector<int> out;
  if (::pthread_getaffinity_np(::pthread_self(), sizeof set, &set) == 0) {
    for (int c = 0; c < CPU_SETSIZE; ++c) {
      if (CPU_ISSET(c, &set)) {
        out.push_back(c);
      }
    }
  }
  return out;
}

bool lock_process_memory(std::string* error) {
  if (::mlockall(MCL_CURRENT | MCL_FUTURE) != 0) {
    if (error != nullptr) {
      *error = errno_text("mlockall", errno);
    }
    return false;
  }
  return true;
}

bool try_fifo_priority(int priority, std::string* error) {
  sched_param p{};
  p.sched_priority = priority;
  const int rc = ::pthread_setschedparam(::pthread_self(), SCHED_FIFO, &p);
  if (rc != 0) {
    if (error != nullptr) {
      *error = errno_text("pthread_setschedparam", rc);
    }
    return false;
  }
  return true;
}

std::vector<int> parse_isolcpus(std::string_view cmdline) {
  std::set<int> cores;
  std::size_t pos = 0;
  while (pos < cmdline.size()) {
    while (pos < cmdline.size() && std::isspace(static_cast<unsigned char>(cmdline[pos]))) {
      ++pos;
    }
    std::size_t end = pos;
    while (end < cmdline.size() && !std::isspace(static_cast<unsigned char>(cmdline[end]))) {
      ++end;
    }
    const std::string_view tok = cmdline.substr(pos, end - pos);
    pos = end;
    constexpr std::string_view key = "isolcpus=";
    if (tok.substr(0, key.size()) != key) {
      continue;
    }
    std::string_view list = tok.substr(key.size());
    while (!list.empty()) {
      const auto comma = list.find(',');
      const std::string_view item = list.substr(0, comma);
      if (!item.empty() && std::isdigit(static_cast<unsigned char>(item.front()))) {
        expand_item(item, cores);
      }
      if (comma == std::string_view::npos) {
        break;
      }
      list.remove_prefix(comma + 1);
    }
  }
  return {cores.begin(), cores.end()};
}

Grade compute_grade(const IsolationReport& r, const CoreMap& map) {
  const std::vector<std::pair<std::string, int>> roles = {{"housekeeping", map.housekeeping},
                                                          {"spine", map.spine},
                                                          {"brain", map.brain},
                                                          {"transport", map.transport}};
  std::set<int> distinct;
  bool all_pinned = true;
  for (const auto& [role, core] : roles) {
    const auto it = std::find_if(r.pinning.begin(), r.pinning.end(), [&](const PinRecord& p) {
      return p.role == role && p.applied && p.core == core;
    });
    if (it == r.pinning.end()) {
      all_pinned = false;
    }
    distinct.insert(core);
  }
  if (!all_pinned || distinct.size() != roles.size()) {
    return Grade::C;
  }
  if (!r.isolated_cores || !r.memory_locked) {
    return Grade::B;
  }
  const auto& iso = *r.isolated_cores;
  const bool isolated = std::count(iso.begin(), iso.end(), map.spine) > 0 &&
                        std::count(iso.begin(), iso.end(), map.transport) > 0;
  return isolated ? Grade::A : Grade::B;
}

IsolationRecorder::IsolationRecorder(CoreMap map) : map_(map) {}

bool IsolationRecorder::pin(const std::string& role, int core) {
  PinRecord rec{role, core, false, {}};
  rec.applied = core >= 0 && pin_current_thread(core, &rec.error);
  if (core < 0) {
    rec.error = "not requested";
  }
  std::lock_guard lock(mu_);
  pins_.push_back(rec);
  return rec.applied;
}

void IsolationRecorder::set_memory_locked(bool locked, std::string error) {
  std::lock_guard lock(mu_);
  locked_ = locked;
  lock_error_ = std::move(error);
}

void IsolationRecorder::set_scheduler(std::string name) {
  std::lock_guard lock(mu_);
  scheduler_ = std::move(name);
}

IsolationReport IsolationRecorder::report(std::optional<std::string> cmdline) const {
  IsolationReport r;
  r.cores_detected = detected_cores();
  if (!cmdline) {
    cmdline = read_proc_cmdline();
  }
  if (cmdline) {
    r.isolated_cores = parse_isolcpus(*cmdline);
  }
  {
    std::lock_guard lock(mu_);
    r.pinning = pins_;
    r.memory_locked = locked_;
    r.memory_lock_error = lock_error_;
    r.scheduler = scheduler_;
  }
  r.grade = compute_grade(r, map_);
  return r;
}

IsolationReport detect_environment(std::optional<std::string> cmdline) {
  return IsolationRecorder().report(std::move(cmdline));
}

std::string report_json(const IsolationReport& r) {
  nlohmann::json j;
  j["cores_detected"] = r.cores_detected;
  j["isolated_cores"] = r.isolated_cores ? nlohmann::json(*r.isolated_cores) : nlohmann::json();
  nlohmann::json pins = nlohmann::json::array();
  for (const auto& p : r.pinning) {
    nlohmann::json e{{"role", p.role}, {"core", p.core}, {"applied", p.applied}};
    if (!p.error.empty()) {
      e["error"] = p.error;
    }
    pins.push_back(std::move(e));
  }
  j["pinning"] = std::move(pins);
  j["memory_locked"] = r.memory_locked;
  if (!r.memory_lock_error.empty()) {
    j["memory_lock_error"] = r.memory_lock_error;
  }
  j["scheduler"] = r.scheduler;
  j["grade"] = std::string(grade_name(r.grade));
  return j.dump();
}

std::uint64_t major_page_faults() noexcept {
  rusage ru{};
  ::getrusage(RUSAGE_SELF, &ru);
  return static_cast<std::uint64_t>(ru.ru_majflt);
}

}  // namespace lithe
