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

#include "lithe/demo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lithe/control_plane.hpp"
#include "lithe/templates.hpp"

namespace lithe {

namespace {

constexpr double kConditioningGuard = 0.05;

struct Driver {
  Framework& fw;
  ControlPlane* cp;
  double period;
  std::size_t seen = 0;
  std::vector<TickMetrics> rows;

  bool lockstep() const { return fw.config().mode == ClockMode::lockstep; }

  // Advances the clock and pulls the newly recorded ticks.
  void advance(double dt) {
    fw.advance_by(dt);
    fw.drain();
    auto fresh = fw.recorder().since(seen);
    seen += fresh.size();
    rows.insert(rows.end(), fresh.begin(), fresh.end());
  }

  void step() {
    if (lockstep()) {
      fw.run_cycles(1);
      fw.drain();
      auto fresh = fw.recorder().since(seen);
      seen += fresh.size();
      rows.insert(rows.end(), fresh.begin(), fresh.end());
    } else {
      advance(period);
    }
  }

  double t_of(const TickMetrics& m) const { return static_cast<double>(m.cycle) * period; }
  double now() const { return rows.empty() ? 0.0 : t_of(rows.back()); }

  void phase(const std::string& name) {
    if (cp != nullptr) {
      cp->set_phase(name);
    }
  }

  void check_estop() const {
    if (fw.spine().estopped()) {
      throw DemoError("spine latched estop");
    }
  }

  BuildTicket swap(ControllerSource src) {
    BuildTicket t = fw.swap_to(std::move(src));
    if (t.stage != BuildStage::active) {
      throw DemoError("swap to '" + t.name + "' failed: " + t.error);
    }
    return t;
  }

  // Steps until the setpoint crosses the measured angle.
  void wait_crossing(double timeout) {
    const double start = now();
    double prev = std::nan("");
    while (now() - start < timeout) {
      step();
      check_estop();
      const auto& m = rows.back();
      const double d = m.setpoint - m.theta;
      if (!std::isnan(prev) && prev * d <= 0.0) {
        return;
      }
      prev = d;
    }
    throw DemoError("setpoint never crossed the measured angle");
  }

  ProbeResult settle(double tau, const DemoPlan& plan) {
    ProbeResult p;
    p.tau = tau;
    const double start = now();
    const auto hold = static_cast<std::size_t>(std::llround(plan.settle_hold_s / period));
    std::size_t still = 0;
    std::size_t checked = rows.size();
    while (now() - start < plan.settle_timeout_s) {
      advance(0.01);
      check_estop();
      for (; checked < rows.size(); ++checked) {
        still = std::abs(rows[checked].omega) < plan.settle_omega ? still + 1 : 0;
        if (still >= hold) {
          double sum = 0.0;
          for (std::size_t i = checked + 1 - hold; i <= checked; ++i) {
            sum += rows[i].theta;
          }
          p.theta_ss = sum / static_cast<double>(hold);
          p.settle_s = t_of(rows[checked]) - start;
          return p;
        }
      }
    }
    std::ostringstream os;
    os << "probe tau=" << tau << " did not settle within " << plan.settle_timeout_s << " s";
    throw DemoError(os.str());
  }
};

double max_step(const std::vector<TickMetrics>& rows, std::size_t from, std::size_t to) {
  double m = 0.0;
  for (std::size_t i = std::max<std::size_t>(from, 1); i < std::min(to, rows.size()); ++i) {
    m = std::max(m, std::abs(rows[i].torque - rows[i - 1].torque));
  }
  return m;
}

std::size_t first_row_of(const std::vector<TickMetrics>& rows, std::uint32_t id, std::size_t from) {
  for (std::size_t i = from; i < rows.size(); ++i) {
    if (rows[i].controller_id == id) {
      return i;
    }
  }
  return rows.size();
}

}  // namespace

double estimate_mgl(const std::vector<std::pair<double, double>>& probes) {
  if (probes.empty()) {
    throw DemoError("estimate_mgl needs at least one probe");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto [tau, theta] = probes[i];
    const double s = std::sin(theta);
    if (!(std::abs(s) > kConditioningGuard)) {
      std::ostringstream os;
      os << "probe " << i << " (tau=" << tau << ", theta_ss=" << theta
         << ") is ill-conditioned: |sin(theta_ss)| <= " << kConditioningGuard;
      throw DemoError(os.str());
    }
    sum += tau / s;
  }
  return sum / static_cast<double>(probes.size());
}

double rmse_between(const std::vector<TickMetrics>& rows, double period_s, double t0, double t1) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : rows) {
    const double t = static_cast<double>(m.cycle) * period_s;
    if (t >= t0 - 1e-12 && t < t1 - 1e-12) {
      const double e = m.setpoint - m.theta;
      sum += e * e;
      ++n;
    }
  }
  return n == 0 ? std::nan("") : std::sqrt(sum / static_cast<double>(n)) * 180.0 / std::numbers::pi;
}

FrameworkConfig demo_framework_config(const DemoPlan& plan, ClockMode mode) {
  FrameworkConfig cfg;
  cfg.mode = mode;
  cfg.brain.frequency = plan.frequency;
  cfg.brain.amplitude = plan.amplitude;
  cfg.lock_memory = mode == ClockMode::realtime;
  return cfg;
}

DemoReport run_demo(Framework& fw, const DemoPlan& plan, ControlPlane* cp) {
  DemoReport rep;
  const double period = static_cast<double>(fw.config().spine.period_ns) * 1e-9;
  Driver d{fw, cp, period, 0, {}};
  const double freq = fw.brain().config().frequency;
  const std::uint64_t missed0 = fw.spine().missed();
  const std::uint64_t overruns0 = fw.spine().overruns();
  std::vector<std::pair<std::uint32_t, std::string>> names{{0, "zero"}};
  auto mark = [&](const std::string& name, double start) {
    rep.phases.push_back({name, start, d.now()});
  };

  try {
    d.phase("warmup");
    d.advance(plan.warmup_s);

    // Phase 1: detuned PD baseline.
    d.phase("baseline");
    ControllerSource base = pd_detuned_source();
    rep.baseline_source = base.source_text;
    BuildTicket bt = d.swap(base);
    names.emplace_back(bt.controller_id, bt.name);
    const double t_base = d.now();
    d.advance(plan.baseline_s);
    rep.baseline_rmse_deg = rmse_between(d.rows, period, d.now() - plan.baseline_window_s + period,
                                         d.now() + period);
    mark("baseline", t_base);

    std::size_t evolved_row = 0;
    std::uint32_t evolved_id = 0;
    if (!plan.external_agent) {
      // Phase 2: constant-torque probes.
      std::vector<std::pair<double, double>> pairs;
      for (const double tau : plan.probe_torques) {
        std::ostringstream name;
        name << "probe_" << format_param(tau);
        d.phase(name.str());
        const double t_probe = d.now();
        BuildTicket pt = d.swap(probe_constant_source(name.str(), tau));
        names.emplace_back(pt.controller_id, pt.name);
        rep.probes.push_back(d.settle(tau, plan));
        pairs.emplace_back(tau, rep.probes.back().theta_ss);
        mark(name.str(), t_probe);
      }

      // Phase 3: gravity-compensated PD from the estimate.
      d.phase("evolve");
      rep.mgl_estimate = estimate_mgl(pairs);
      d.wait_crossing(3.0 / freq);
      ControllerSource evo = pd_gravity_source("pd_gravity", plan.evolved_kp, plan.evolved_kd,
                                               rep.mgl_estimate, plan.handover_cycles);
      rep.evolved_source = evo.source_text;
      const std::size_t before = d.rows.size();
      BuildTicket et = d.swap(evo);
      names.emplace_back(et.controller_id, et.name);
      evolved_id = et.controller_id;
      d.advance(plan.evolve_s);
      evolved_row = first_row_of(d.rows, evolved_id, before);
      if (evolved_row == d.rows.size()) {
        throw DemoError("evolved controller never ran");
      }
    } else {
      // The connected agent probes and swaps; the phase ends once its latest
      // controller has run for evolve_s without another swap.
      if (cp == nullptr) {
        throw DemoError("external agent mode needs the control plane");
      }
      d.phase("agent");
      const std::uint32_t base_id = fw.active().active_id();
      std::uint32_t last_id = base_id;
      double last_change = d.now();
      const auto wall0 = std::chrono::steady_clock::now();
      for (;;) {
        d.advance(0.01);
        if (d.lockstep()) {
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        d.check_estop();
        const std::uint32_t id = fw.active().active_id();
        if (id != last_id) {
          last_id = id;
          last_change = d.now();
          names.emplace_back(id, cp->controller_name(id));
        }
        if (last_id != base_id && d.now() - last_change >= plan.evolve_s) {
          break;
        }
        if (std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count() >
            plan.agent_timeout_s) {
          throw DemoError("external agent did not install a controller in time");
        }
      }
      evolved_id = last_id;
      evolved_row = first_row_of(d.rows, evolved_id, 0);
    }
    rep.evolve_swap_t = d.t_of(d.rows[evolved_row]);
    rep.evolved_rmse_deg = rmse_between(d.rows, period, rep.evolve_swap_t, d.now() + period);
    const std::size_t window_end = evolved_row + static_cast<std::size_t>(plan.handover_cycles) + 1;
    rep.handover_max_step = max_step(d.rows, evolved_row, window_end);
    rep.steady_max_step = max_step(d.rows, window_end + 1, d.rows.size());
    mark("evolve", rep.evolve_swap_t);

    // Phase 4: freeze trajectory publishing at a setpoint peak.
    d.phase("freeze");
    const double now = d.now();
    const double peak = (std::floor(freq * now - 0.25) + 1.25) / freq;
    d.advance(std::max(0.0, peak - now));
    d.check_estop();
    rep.freeze_start = fw.now_s();
    rep.freeze_theta0 = d.rows.back().theta;
    fw.brain().freeze(rep.freeze_start, plan.freeze_s);
    const std::size_t frozen_from = d.rows.size();
    d.advance(plan.freeze_s);
    d.check_estop();
    double residual = 0.0;
    std::size_t n_res = 0;
    for (std::size_t i = frozen_from; i < d.rows.size(); ++i) {
      const double t = d.t_of(d.rows[i]);
      if (t >= rep.freeze_start + plan.freeze_s) {
        break;
      }
      rep.freeze_drift_max =
          std::max(rep.freeze_drift_max, std::abs(d.rows[i].theta - rep.freeze_theta0));
      // The hold's steady state exposes the gravity torque directly.
      if (t >= rep.freeze_start + plan.freeze_s - 0.5 &&
          std::abs(std::sin(d.rows[i].theta)) > kConditioningGuard) {
        residual += d.rows[i].torque / std::sin(d.rows[i].theta);
        ++n_res;
      }
    }
    mark("freeze", rep.freeze_start);
    if (rep.freeze_drift_max >= plan.drift_limit) {
      std::ostringstream os;
      os << "freeze drift " << rep.freeze_drift_max << " rad exceeds " << plan.drift_limit;
      throw DemoError(os.str());
    }

    if (!plan.external_agent) {
      // Retune with stiffer gains and the estimate refined from the hold.
      d.phase("retune");
      rep.mgl_retune = n_res > 0 ? residual / static_cast<double>(n_res) : rep.mgl_estimate;
      d.wait_crossing(3.0 / freq);
      ControllerSource rt = pd_gravity_source("pd_gravity_retuned", plan.retune_kp,
                                              plan.retune_kd, rep.mgl_retune, plan.handover_cycles);
      rep.retune_source = rt.source_text;
      BuildTicket rtt = d.swap(rt);
      names.emplace_back(rtt.controller_id, rtt.name);
      const std::size_t before = d.rows.size();
      d.advance(plan.retune_settle_s + plan.retune_s);
      const std::size_t r0 = first_row_of(d.rows, rtt.controller_id, before);
      if (r0 == d.rows.size()) {
        throw DemoError("retuned controller never ran");
      }
      rep.retune_swap_t = d.t_of(d.rows[r0]);
      const double from = rep.retune_swap_t + plan.retune_settle_s;
      rep.retune_rmse_deg = rmse_between(d.rows, period, from, from + plan.retune_s);
      mark("retune", rep.retune_swap_t);
    }
    d.check_estop();
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  d.phase("done");
  rep.estop = fw.spine().estopped();
  rep.missed = fw.spine().missed() - missed0;
  rep.overruns = fw.spine().overruns() - overruns0;
  rep.cycles = d.rows.size();
  rep.grade = std::string(grade_name(fw.isolation_report().grade));
  rep.controllers = names;
  rep.trace.reserve(d.rows.size());
  for (const auto& m : d.rows) {
    rep.trace.push_back({d.t_of(m), m.setpoint, m.theta, m.torque, m.controller_id,
                         m.release_jitter_ns, m.handoff_ns});
  }
  return rep;
}

std::string demo_summary_json(const DemoReport& r) {
  nlohmann::json j;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = r.error;
  }
  j["rmse_deg"] = {{"baseline", r.baseline_rmse_deg},
                   {"evolved", r.evolved_rmse_deg},
                   {"retune", r.retune_rmse_deg}};
  j["phases"] = nlohmann::json::array();
  for (const auto& p : r.phases) {
    j["phases"].push_back({{"name", p.name}, {"start", p.start}, {"end", p.end}});
  }
  j["probes"] = nlohmann::json::array();
  for (const auto& p : r.probes) {
    j["probes"].push_back(
        {{"tau", p.tau}, {"theta_ss", p.theta_ss}, {"settle_s", p.settle_s},
         {"theta_closed_form", std::asin(std::clamp(p.tau / 1.2, -1.0, 1.0))}});
  }
  j["mgl_estimate"] = r.mgl_estimate;
  j["mgl_retune"] = r.mgl_retune;
  j["evolve_swap_t"] = r.evolve_swap_t;
  j["retune_swap_t"] = r.retune_swap_t;
  j["freeze"] = {{"start", r.freeze_start},
                 {"theta0", r.freeze_theta0},
                 {"drift_max", r.freeze_drift_max}};
  j["handover"] = {{"max_step", r.handover_max_step}, {"steady_max_step", r.steady_max_step}};
  j["estop"] = r.estop;
  j["missed"] = r.missed;
  j["overruns"] = r.overruns;
  j["cycles"] = r.cycles;
  j["grade"] = r.grade;
  j["controllers"] = nlohmann::json::object();
  for (const auto& [id, name] : r.controllers) {
    j["controllers"][std::to_string(id)] = name;
  }
  return j.dump(2);
}

void write_demo_outputs(const DemoReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::uint32_t, std::string> names(r.controllers.begin(), r.controllers.end());
  std::ofstream csv(dir / "trace.csv");
  csv << "t,setpoint,theta,torque,controller,jitter_ns,handoff_ns\n";
  csv.precision(17);
  for (const auto& row : r.trace) {
    const auto it = names.find(row.controller_id);
    csv << row.t << ',' << row.setpoint << ',' << row.theta << ',' << row.torque << ','
        << (it == names.end() ? std::to_string(row.controller_id) : it->second) << ','
        << row.jitter_ns << ',' << row.handoff_ns << '\n';
  }
  std::ofstream js(dir / "phases.json");
  js << demo_summary_json(r) << '\n';
  if (!csv || !js) {
    throw std::runtime_error("cannot write demo outputs to " + dir.string());
  }
}

}  // namespace lithe
