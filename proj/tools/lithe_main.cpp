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

#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "lithe/bench.hpp"
#include "lithe/codegen.hpp"
#include "lithe/config.hpp"
#include "lithe/control_plane.hpp"
#include "lithe/demo.hpp"
#include "lithe/isolation.hpp"
#include "lithe/layout.hpp"
#include "lithe/schema.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) {
  g_stop.store(true);
}

lithe::AppConfig load_or_default(const std::string& path) {
  return path.empty() ? lithe::AppConfig{} : lithe::load_config(path);
}

int cmd_codegen(const std::string& schema, const std::string& out_dir, const std::string& targets,
                bool print_hash) {
  namespace s = lithe::schema;
  const auto plan = s::compute_layout(s::load_schema_file(schema));
  for (const auto& p : s::write_bindings(plan, s::parse_target_list(targets), out_dir)) {
    std::printf("wrote %s\n", p.c_str());
  }
  if (print_hash) {
    std::printf("layout_hash 0x%016llx\n", static_cast<unsigned long long>(s::layout_hash(plan)));
  }
  return 0;
}

int cmd_run(const std::string& config, bool sim, int serve_port, bool serve, double duration,
            bool lockstep) {
  if (!sim) {
    std::fprintf(stderr,
                 "lithe run: no hardware transport is built in; pass --sim for the simulated plant\n");
    return 2;
  }
  lithe::AppConfig app = load_or_default(config);
  if (lockstep) {
    app.framework.mode = lithe::ClockMode::lockstep;
  }
  if (serve) {
    app.control_plane.enabled = true;
    if (serve_port >= 0) {
      app.control_plane.port = serve_port;
    }
  }
  lithe::Framework fw(app.framework);
  std::unique_ptr<lithe::ControlPlane> cp;
  if (app.control_plane.enabled) {
    cp = std::make_unique<lithe::ControlPlane>(fw, app.control_plane);
    cp->start();
    std::fprintf(stderr, "control plane listening on %s:%d\n", app.control_plane.bind.c_str(),
                 cp->port());
  }
  fw.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto t0 = std::chrono::steady_clock::now();
  auto next_report = t0 + std::chrono::seconds(5);
  while (!g_stop.load()) {
    if (lockstep) {
      // Paced to wall time so clients see a live stream.
      fw.run_cycles(10);
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    const auto now = std::chrono::steady_clock::now();
    if (duration > 0 && std::chrono::duration<double>(now - t0).count() >= duration) {
      break;
    }
    if (now >= next_report) {
      next_report += std::chrono::seconds(5);
      std::fprintf(stderr, "cycle %llu missed %llu estop %d controller %u\n",
                   static_cast<unsigned long long>(fw.spine().executed_cycles()),
                   static_cast<unsigned long long>(fw.spine().missed()),
                   fw.spine().estopped() ? 1 : 0, fw.active().active_id());
    }
  }
  if (cp) {
    cp->stop();
  }
  fw.stop();
  std::printf("cycles %llu missed %llu overruns %llu estop %d grade %s\n",
              static_cast<unsigned long long>(fw.spine().executed_cycles()),
              static_cast<unsigned long long>(fw.spine().missed()),
              static_cast<unsigned long long>(fw.spine().overruns()), fw.spine().estopped() ? 1 : 0,
              std::string(lithe::grade_name(fw.isolation_report().grade)).c_str());
  return 0;
}

int cmd_demo(const std::string& out, const std::string& config, bool realtime,
             const std::string& agent, int serve_port) {
  lithe::DemoPlan plan;
  plan.external_agent = agent == "external";
  lithe::AppConfig app = load_or_default(config);
  if (config.empty()) {
    app.framework = lithe::demo_framework_config(
        plan, realtime ? lithe::ClockMode::realtime : lithe::ClockMode::lockstep);
  } else if (realtime) {
    app.framework.mode = lithe::ClockMode::realtime;
  }
  plan.frequency = app.framework.brain.frequency;
  plan.amplitude = app.framework.brain.amplitude;
  lithe::Framework fw(app.framework);
  std::unique_ptr<lithe::ControlPlane> cp;
  if (plan.external_agent || serve_port >= 0) {
    if (serve_port >= 0) {
      app.control_plane.port = serve_port;
    }
    cp = std::make_unique<lithe::ControlPlane>(fw, app.control_plane);
    cp->start();
    std::fprintf(stderr, "control plane listening on %s:%d\n", app.control_plane.bind.c_str(),
                 cp->port());
  }
  fw.start();
  const lithe::DemoReport r = lithe::run_demo(fw, plan, cp.get());
  if (cp) {
    cp->stop();
  }
  fw.stop();
  lithe::write_demo_outputs(r, out);
  std::printf("baseline %.3f deg  evolved %.3f deg  retune %.3f deg  m_gl %.4f  drift %.4f rad  "
              "missed %llu  estop %d\n",
              r.baseline_rmse_deg, r.evolved_rmse_deg, r.retune_rmse_deg, r.mgl_estimate,
              r.freeze_drift_max, static_cast<unsigned long long>(r.missed), r.estop ? 1 : 0);
  if (!r.ok) {
    std::fprintf(stderr, "demo aborted: %s\n", r.error.c_str());
    return 1;
  }
  return 0;
}

int cmd_bench(double duration, double rate, const std::string& stress, const std::string& out,
              const std::string& config, std::size_t dim, std::size_t thrash_mb, int threads,
              const std::string& external) {
  const auto kind = lithe::parse_stress_kind(stress);
  if (!kind) {
    std::fprintf(stderr, "unknown stress kind '%s'\n", stress.c_str());
    return 2;
  }
  lithe::BenchOptions opt;
  opt.duration_s = duration;
  opt.rate_hz = rate;
  opt.framework = load_or_default(config).framework;
  opt.stress.kind = *kind;
  opt.stress.matrix_dim = dim;
  opt.stress.thrash_bytes = thrash_mb << 20;
  opt.stress.threads = threads;
  if (!external.empty()) {
    std::istringstream words(external);
    for (std::string w; words >> w;) {
      opt.stress.external_command.push_back(w);
    }
  }
  const lithe::BenchResult r = lithe::run_bench(opt);
  lithe::export_bench(r, out);
  std::printf("cycles %llu missed %llu  WCET(handoff) %.3f us  MRJ %.3f us  grade %s%s%s\n",
              static_cast<unsigned long long>(r.cycles), static_cast<unsigned long long>(r.missed),
              static_cast<double>(r.wcet_handoff_ns) * 1e-3,
              static_cast<double>(r.max_release_jitter_ns) * 1e-3,
              std::string(lithe::grade_name(r.isolation.grade)).c_str(),
              r.valid ? "" : "  INVALID: ", r.valid ? "" : r.invalid_reason.c_str());
  return r.valid ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lithe: hot-swappable 1 kHz control framework"};
  app.require_subcommand(1);

  auto* codegen = app.add_subcommand("codegen", "Generate layout bindings from a schema");
  std::string schema, out_dir, targets = "primary,brain";
  bool print_hash = false;
  codegen->add_option("--schema", schema, "Schema file")->required()->check(CLI::ExistingFile);
  codegen->add_option("--out-dir", out_dir, "Output directory")->required();
  codegen->add_option("--targets", targets, "Comma-separated targets (primary, brain)");
  codegen->add_flag("--print-hash", print_hash, "Print the layout hash");

  auto* run = app.add_subcommand("run", "Run the control loop");
  std::string config;
  bool sim = false, lockstep = false;
  int serve_port = -1;
  double duration = 0.0;
  run->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
  run->add_flag("--sim", sim, "Use the simulated transport and plant");
  auto* serve_opt = run->add_option("--serve", serve_port, "Serve the control plane on this port")
                        ->expected(0, 1)
                        ->default_str("7410");
  run->add_option("--duration", duration, "Stop after this many seconds (0: until signalled)");
  run->add_flag("--lockstep", lockstep, "Drive a virtual clock paced to wall time");

  auto* demo = app.add_subcommand("demo", "Scripted demos");
  auto* evolution = demo->add_subcommand("evolution", "Four-phase controller evolution demo");
  demo->require_subcommand(1);
  std::string demo_out = "demo-out", demo_config, agent = "scripted";
  bool realtime = false;
  int demo_port = -1;
  evolution->add_option("--out", demo_out, "Output directory");
  evolution->add_option("--config", demo_config, "JSON config file")->check(CLI::ExistingFile);
  evolution->add_flag("--realtime", realtime, "Run on the wall clock instead of lockstep");
  evolution->add_option("--agent", agent, "scripted | external")
      ->check(CLI::IsMember({"scripted", "external"}));
  evolution->add_option("--serve", demo_port, "Serve the control plane on this port");

  auto* bench = app.add_subcommand("bench", "Jitter / WCET benchmark under stress");
  double bench_duration = 300.0, rate = 1000.0;
  std::string stress = "none", bench_out = "bench-out", bench_config, external;
  std::size_t dim = 600, thrash_mb = 64;
  int threads = 0;
  bench->add_option("--duration", bench_duration, "Seconds");
  bench->add_option("--rate", rate, "Hz");
  bench->add_option("--stress", stress, "cache_thrash | matrix | none");
  bench->add_option("--out", bench_out, "Output directory");
  bench->add_option("--config", bench_config, "JSON config file")->check(CLI::ExistingFile);
  bench->add_option("--matrix-dim", dim, "Matrix dimension");
  bench->add_option("--thrash-mb", thrash_mb, "Thrash buffer size in MiB");
  bench->add_option("--threads", threads, "Workload threads (0: all permitted cores)");
  bench->add_option("--external-stressor", external, "Extra stressor command line to launch");

  auto* iso = app.add_subcommand("isolation", "Print the isolation report for this host");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*codegen) {
      return cmd_codegen(schema, out_dir, targets, print_hash);
    }
    if (*run) {
      if (serve_opt->count() > 0 && serve_port < 0) {
        serve_port = 7410;
      }
      return cmd_run(config, sim, serve_port, serve_opt->count() > 0, duration, lockstep);
    }
    if (*evolution) {
      return cmd_demo(demo_out, demo_config, realtime, agent, demo_port);
    }
    if (*bench) {
      return cmd_bench(bench_duration, rate, stress, bench_out, bench_config, dim, thrash_mb,
                       threads, external);
    }
    if (*iso) {
      std::printf("%s\n", lithe::report_json(lithe::detect_environment()).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lithe: %s\n", e.what());
    return 1;
  }
  return 0;
}
