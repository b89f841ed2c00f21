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

#include "lithe/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace lithe {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("section '" + section + "' must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      ok = ok || key == a;
    }
    if (!ok) {
      throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type");
  }
}

int read_core(const json& j, const char* key, int def) {
  int v = def;
  read(j, key, v, "cores");
  if (v < 0) {
    throw ConfigError(std::string("cores.") + key + " must be >= 0");
  }
  return v;
}

}  // namespace

AppConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "<root>",
             {"mode", "wait", "lock_memory", "fifo_priority", "spine", "safety", "plant", "bus",
              "cores", "brain", "loader", "segment", "control_plane", "metrics"});
  AppConfig app;
  FrameworkConfig& f = app.framework;

  std::string mode = "realtime";
  read(root, "mode", mode, "<root>");
  if (mode == "realtime") {
    f.mode = ClockMode::realtime;
  } else if (mode == "lockstep") {
    f.mode = ClockMode::lockstep;
  } else {
    throw ConfigError("mode must be 'realtime' or 'lockstep'");
  }
  read(root, "wait", f.wait, "<root>");
  if (f.wait != "auto" && !parse_wait_strategy(f.wait)) {
    throw ConfigError("unknown wait strategy '" + f.wait + "'");
  }
  read(root, "lock_memory", f.lock_memory, "<root>");
  if (root.contains("fifo_priority")) {
    const json& fp = root.at("fifo_priority");
    if (fp.is_boolean()) {
      f.fifo_priority = fp.get<bool>();
    } else if (fp.is_number_integer()) {
      f.fifo_priority = true;
      f.fifo_level = fp.get<int>();
    } else {
      throw ConfigError("fifo_priority must be a boolean or a priority level");
    }
  }

  if (root.contains("spine")) {
    const json& s = root.at("spine");
    check_keys(s, "spine",
               {"rate_hz", "period_ns", "core", "miss_policy", "stale_threshold_s", "retry_budget",
                "estop_on_controller_fault", "transport_dead_cycles", "handoff_timeout_ns"});
    if (s.contains("rate_hz") && s.contains("period_ns")) {
      throw ConfigError("spine: give rate_hz or period_ns, not both");
    }
    if (s.contains("rate_hz")) {
      double hz = 0;
      read(s, "rate_hz", hz, "spine");
      if (!(hz > 0)) {
        throw ConfigError("spine.rate_hz must be positive");
      }
      f.spine.period_ns = std::llround(1e9 / hz);
    }
    read(s, "period_ns", f.spine.period_ns, "spine");
    std::string policy = "skip";
    read(s, "miss_policy", policy, "spine");
    const auto p = parse_miss_policy(policy);
    if (!p) {
      throw ConfigError("spine.miss_policy must be 'skip' or 'estop'");
    }
    f.spine.miss_policy = *p;
    read(s, "stale_threshold_s", f.spine.stale_threshold, "spine");
    read(s, "retry_budget", f.spine.retry_budget, "spine");
    read(s, "estop_on_controller_fault", f.spine.estop_on_controller_fault, "spine");
    read(s, "transport_dead_cycles", f.spine.transport_dead_cycles, "spine");
    read(s, "handoff_timeout_ns", f.spine.handoff_timeout_ns, "spine");
    if (s.contains("core")) {
      f.cores.spine = read_core(s, "core", f.cores.spine);
    }
  }
  if (root.contains("safety")) {
    const json& s = root.at("safety");
    check_keys(s, "safety", {"torque_limit", "velocity_limit"});
    read(s, "torque_limit", f.spine.safety.torque_limit, "safety");
    read(s, "velocity_limit", f.spine.safety.velocity_limit, "safety");
  }
  if (root.contains("plant")) {
    const json& p = root.at("plant");
    check_keys(p, "plant",
               {"inertia", "mgl", "damping", "torque_limit", "substep", "theta0", "omega0"});
    read(p, "inertia", f.plant.inertia, "plant");
    read(p, "mgl", f.plant.mgl, "plant");
    read(p, "damping", f.plant.damping, "plant");
    read(p, "torque_limit", f.plant.torque_limit, "plant");
    read(p, "substep", f.plant.substep, "plant");
    read(p, "theta0", f.initial_plant.theta, "plant");
    read(p, "omega0", f.initial_plant.omega, "plant");
  }
  if (root.contains("bus")) {
    const json& b = root.at("bus");
    check_keys(b, "bus", {"dispatch_latency_s", "return_latency_s", "jitter_stddev_s", "seed"});
    read(b, "dispatch_latency_s", f.bus.dispatch_latency, "bus");
    read(b, "return_latency_s", f.bus.return_latency, "bus");
    read(b, "jitter_stddev_s", f.bus.jitter_stddev, "bus");
    read(b, "seed", f.bus.seed, "bus");
  }
  if (root.contains("cores")) {
    const json& c = root.at("cores");
    check_keys(c, "cores", {"housekeeping", "spine", "brain", "transport"});
    f.cores.housekeeping = read_core(c, "housekeeping", f.cores.housekeeping);
    f.cores.spine = read_core(c, "spine", f.cores.spine);
    f.cores.brain = read_core(c, "brain", f.cores.brain);
    f.cores.transport = read_core(c, "transport", f.cores.transport);
  }
  f.spine.core = f.cores.spine;
  if (root.contains("brain")) {
    const json& b = root.at("brain");
    check_keys(b, "brain", {"enabled", "frequency_hz", "amplitude", "offset", "rate_hz", "lookahead_s"});
    read(b, "enabled", f.brain.enabled, "brain");
    read(b, "frequency_hz", f.brain.frequency, "brain");
    read(b, "amplitude", f.brain.amplitude, "brain");
    read(b, "offset", f.brain.offset, "brain");
    read(b, "rate_hz", f.brain.rate, "brain");
    read(b, "lookahead_s", f.brain.lookahead, "brain");
    if (!(f.brain.rate > 0) || !(f.brain.lookahead >= 0)) {
      throw ConfigError("brain.rate_hz must be positive and brain.lookahead_s non-negative");
    }
  }
  if (root.contains("loader")) {
    const json& l = root.at("loader");
    check_keys(l, "loader",
               {"work_dir", "compiler", "include_dirs", "flags", "nice", "idle_priority", "compile_timeout_s",
                "queue_capacity", "grace_cycles"});
    std::string dir = f.loader.work_dir.string();
    read(l, "work_dir", dir, "loader");
    f.loader.work_dir = dir;
    read(l, "compiler", f.loader.compiler, "loader");
    read(l, "include_dirs", f.loader.include_dirs, "loader");
    read(l, "flags", f.loader.flags, "loader");
    read(l, "nice", f.loader.nice, "loader");
    read(l, "idle_priority", f.loader.idle_priority, "loader");
    read(l, "compile_timeout_s", f.loader.compile_timeout_s, "loader");
    read(l, "queue_capacity", f.loader.queue_capacity, "loader");
    read(l, "grace_cycles", f.loader.grace_cycles, "loader");
  }
  if (root.contains("segment")) {
    const json& s = root.at("segment");
    check_keys(s, "segment", {"shared", "name"});
    read(s, "shared", f.shared_segment, "segment");
    read(s, "name", f.segment_name, "segment");
  }
  if (root.contains("metrics")) {
    const json& m = root.at("metrics");
    check_keys(m, "metrics", {"queue_capacity", "record_limit"});
    read(m, "queue_capacity", f.metrics_capacity, "metrics");
    read(m, "record_limit", f.record_limit, "metrics");
  }
  if (root.contains("control_plane")) {
    const json& c = root.at("control_plane");
    check_keys(c, "control_plane",
               {"enabled", "bind", "port", "telemetry_hz", "rmse_window_s", "client_queue_frames"});
    auto& cp = app.control_plane;
    read(c, "enabled", cp.enabled, "control_plane");
    read(c, "bind", cp.bind, "control_plane");
    read(c, "port", cp.port, "control_plane");
    read(c, "telemetry_hz", cp.telemetry_hz, "control_plane");
    read(c, "rmse_window_s", cp.rmse_window_s, "control_plane");
    read(c, "client_queue_frames", cp.client_queue_frames, "control_plane");
    if (cp.port < 0 || cp.port > 65535) {
      throw ConfigError("control_plane.port out of range");
    }
    if (!(cp.telemetry_hz > 0) || !(cp.rmse_window_s > 0)) {
      throw ConfigError("control_plane.telemetry_hz and rmse_window_s must be positive");
    }
  }

  if (!f.spine.valid()) {
    throw ConfigError("spine: period must be >= 100 us and safety limits positive");
  }
  if (!f.plant.valid()) {
    throw ConfigError("plant: parameters must be finite and positive");
  }
  return app;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const AppConfig& app) {
  const FrameworkConfig& f = app.framework;
  json j;
  j["mode"] = f.mode == ClockMode::realtime ? "realtime" : "lockstep";
  j["wait"] = f.wait;
  j["lock_memory"] = f.lock_memory;
  j["fifo_priority"] = f.fifo_priority ? json(f.fifo_level) : json(false);
  j["spine"] = {{"period_ns", f.spine.period_ns},
                {"miss_policy", f.spine.miss_policy == MissPolicy::skip ? "skip" : "estop"},
                {"stale_threshold_s", f.spine.stale_threshold},
                {"retry_budget", f.spine.retry_budget},
                {"estop_on_controller_fault", f.spine.estop_on_controller_fault},
                {"transport_dead_cycles", f.spine.transport_dead_cycles},
                {"handoff_timeout_ns", f.spine.handoff_timeout_ns}};
  j["safety"] = {{"torque_limit", f.spine.safety.torque_limit},
                 {"velocity_limit", f.spine.safety.velocity_limit}};
  j["plant"] = {{"inertia", f.plant.inertia},         {"mgl", f.plant.mgl},
                {"damping", f.plant.damping},         {"torque_limit", f.plant.torque_limit},
                {"substep", f.plant.substep},         {"theta0", f.initial_plant.theta},
                {"omega0", f.initial_plant.omega}};
  j["bus"] = {{"dispatch_latency_s", f.bus.dispatch_latency},
              {"return_latency_s", f.bus.return_latency},
              {"jitter_stddev_s", f.bus.jitter_stddev},
              {"seed", f.bus.seed}};
  j["cores"] = {{"housekeeping", f.cores.housekeeping},
                {"spine", f.cores.spine},
                {"brain", f.cores.brain},
                {"transport", f.cores.transport}};
  j["brain"] = {{"enabled", f.brain.enabled},     {"frequency_hz", f.brain.frequency},
                {"amplitude", f.brain.amplitude}, {"offset", f.brain.offset},
                {"rate_hz", f.brain.rate},        {"lookahead_s", f.brain.lookahead}};
  j["loader"] = {{"work_dir", f.loader.work_dir.string()},
                 {"compiler", f.loader.compiler},
                 {"include_dirs", f.loader.include_dirs},
                 {"flags", f.loader.flags},
                 {"nice", f.loader.nice},
                 {"idle_priority", f.loader.idle_priority},
                 {"compile_timeout_s", f.loader.compile_timeout_s},
                 {"queue_capacity", f.loader.queue_capacity},
                 {"grace_cycles", f.loader.grace_cycles}};
  j["segment"] = {{"shared", f.shared_segment}, {"name", f.segment_name}};
  j["metrics"] = {{"queue_capacity", f.metrics_capacity}, {"record_limit", f.record_limit}};
  const auto& cp = app.control_plane;
  j["control_plane"] = {{"enabled", cp.enabled},
                        {"bind", cp.bind},
                        {"port", cp.port},
                        {"telemetry_hz", cp.telemetry_hz},
                        {"rmse_window_s", cp.rmse_window_s},
                        {"client_queue_frames", cp.client_queue_frames}};
  return j.dump(2);
}

}  // namespace lithe
