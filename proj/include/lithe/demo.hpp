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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lithe/framework.hpp"

namespace lithe {

class ControlPlane;

struct DemoPlan {
  double frequency = 0.5;  // Hz
  double amplitude = 1.0;  // rad
  double warmup_s = 0.5;
  double baseline_s = 6.0;
  double baseline_window_s = 3.0;  // trailing part of the baseline phase scored
  std::vector<double> probe_torques{0.4, 0.6};
  double settle_omega = 0.01;  // rad/s
  double settle_hold_s = 0.5;
  double settle_timeout_s = 8.0;
  double evolved_kp = 25.0;
  double evolved_kd = 0.95;
  int handover_cycles = 50;
  double evolve_s = 5.5;
  double freeze_s = 1.5;
  double drift_limit = 0.05;  // rad
  double retune_kp = 50.0;
  double retune_kd = 1.5;
  double retune_settle_s = 0.5;
  double retune_s = 5.0;
  double handover_ratio = 3.0;
  bool external_agent = false;
  double agent_timeout_s = 300.0;
};

class DemoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// m̂gl = mean over probes of tau / sin(theta_ss). Throws DemoError naming the
/// first probe with |sin(theta_ss)| <= 0.05.
double estimate_mgl(const std::vector<std::pair<double, double>>& probes);

struct ProbeResult {
  double tau = 0.0;
  double theta_ss = 0.0;
  double settle_s = 0.0;
};

struct PhaseMark {
  std::string name;
  double start = 0.0;
  double end = 0.0;
};

struct DemoTraceRow {
  double t;
  double setpoint;
  double theta;
  double torque;
  std::uint32_t controller_id;
  std::int32_t jitter_ns;
  std::int32_t handoff_ns;
};

struct DemoReport {
  bool ok = false;
  std::string error;
  std::vector<PhaseMark> phases;
  std::vector<ProbeResult> probes;
  double baseline_rmse_deg = 0.0;
  double evolved_rmse_deg = 0.0;
  double retune_rmse_deg = 0.0;
  double mgl_estimate = 0.0;
  double mgl_retune = 0.0;
  double evolve_swap_t = 0.0;
  double retune_swap_t = 0.0;
  double freeze_start = 0.0;
  double freeze_theta0 = 0.0;
  double freeze_drift_max = 0.0;
  double handover_max_step = 0.0;  // |delta torque| over the handover window
  double steady_max_step = 0.0;    // |delta torque| over the rest of the evolved phase
  bool estop = false;
  std::uint64_t missed = 0;
  std::uint64_t overruns = 0;
  std::uint64_t cycles = 0;
  std::string grade;
  std::string baseline_source;
  std::string evolved_source;
  std::string retune_source;
  std::vector<std::pair<std::uint32_t, std::string>> controllers;
  std::vector<DemoTraceRow> trace;
};

/// RMSE in degrees over recorded ticks with cycle time in [t0, t1).
double rmse_between(const std::vector<TickMetrics>& rows, double period_s, double t0, double t1);

/// Framework settings the demo expects: sine reference from the plan.
FrameworkConfig demo_framework_config(const DemoPlan& plan, ClockMode mode);

/// Runs the scripted four-phase demo on a started framework. Failures are
/// reported in DemoReport::error rather than thrown.
DemoReport run_demo(Framework& fw, const DemoPlan& plan, ControlPlane* cp = nullptr);

/// Writes trace.csv and phases.json into dir.
void write_demo_outputs(const DemoReport& report, const std::filesystem::path& dir);

std::string demo_summary_json(const DemoReport& report);

}  // namespace lithe
