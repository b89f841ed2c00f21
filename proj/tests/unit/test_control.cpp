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

#include <arpa/inet.h>
#include <gtest/gtest.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lithe/config.hpp"
#include "lithe/control_plane.hpp"
#include "lithe/demo.hpp"
#include "test_util.hpp"

using namespace lithe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

FrameworkConfig lockstep_config(const std::string& tag) {
  FrameworkConfig cfg;
  cfg.mode = ClockMode::lockstep;
  cfg.lock_memory = false;
  cfg.loader.work_dir = lithe_test::work_dir(tag);
  cfg.loader.flags = {"-std=c++20", "-O0", "-fPIC", "-shared"};
  return cfg;
}

ControlPlaneConfig ephemeral() {
  ControlPlaneConfig c;
  c.enabled = true;
  c.port = 0;
  return c;
}

json one(const std::vector<std::string>& replies) {
  EXPECT_EQ(replies.size(), 1u);
  return replies.empty() ? json() : json::parse(replies.front());
}

class LineClient {
 public:
  explicit LineClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(port));
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ok_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0;
  }
  ~LineClient() {
    if (fd_ >= 0) ::close(fd_);
  }
  bool ok() const { return ok_; }
  const std::vector<std::string>& seen() const { return seen_; }
  void send(const std::string& s) {
    const std::string line = s + "\n";
    ASSERT_EQ(::write(fd_, line.data(), line.size()), static_cast<ssize_t>(line.size()));
  }
  /// Next line whose type is `type`, skipping others; empty json on timeout.
  json next(const std::string& type, double timeout_s = 10.0) {
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        const std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        seen_.push_back(line);
        json j = json::parse(line);
        if (j.value("type", "") == type) return j;
        continue;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                            end - std::chrono::steady_clock::now())
                            .count();
      if (left <= 0) return {};
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left)) <= 0) return {};
      char tmp[4096];
      const ssize_t n = ::read(fd_, tmp, sizeof tmp);
      if (n <= 0) return {};
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  bool ok_ = false;
  std::string buf_;
  std::vector<std::string> seen_;
};

}  // namespace

TEST(Rmse, ClosedForms) {
  std::vector<std::pair<double, double>> s(100, {0.3, 0.2});
  EXPECT_NEAR(*rmse_degrees(s), 5.729577951308232, 1e-9);
  std::vector<std::pair<double, double>> z(10, {0.7, 0.7});
  EXPECT_EQ(*rmse_degrees(z), 0.0);
  EXPECT_FALSE(rmse_degrees({}));
}

TEST(Rmse, TrailingWindow) {
  RmseWindow w(1.0);
  EXPECT_FALSE(w.value());
  for (int i = 0; i < 1000; ++i) w.push(i * 0.001, 1.0, 0.0);  // error 1 rad
  for (int i = 1000; i < 3000; ++i) w.push(i * 0.001, 0.1, 0.0);
  EXPECT_NEAR(*w.value(), 5.729577951308232, 1e-9);
}

TEST(ControlPlane, StatusReportsLoopState) {
  Framework fw(lockstep_config("cp_status"));
  ControlPlane cp(fw, ephemeral());
  fw.start();
  fw.run_cycles(250);
  const json s = one(cp.handle_line(0, R"({"type":"status_request"})"));
  EXPECT_EQ(s["type"], "status");
  EXPECT_EQ(s["rate"], 1000.0);
  EXPECT_EQ(s["miss_count"], 0);
  EXPECT_EQ(s["cycle"], 250);
  EXPECT_EQ(s["controller_id"], 0);
  EXPECT_TRUE(s["grade"] == "A" || s["grade"] == "B" || s["grade"] == "C");
  EXPECT_EQ(s["estop"], false);
}

TEST(ControlPlane, FreezeHaltsPublishingButNotTheLoop) {
  Framework fw(lockstep_config("cp_freeze"));
  ControlPlane cp(fw, ephemeral());
  fw.start();
  fw.run_cycles(1000);
  const json f = one(cp.handle_line(0, R"({"type":"fault","kind":"freeze_brain","duration_ms":1500})"));
  EXPECT_EQ(f["accepted"], true);
  EXPECT_NEAR(f["until"].get<double>(), fw.now_s() + 1.5, 1e-9);
  const auto published = fw.brain().published();
  const double last_t = fw.brain().last_published_t();
  fw.run_cycles(1400);
  EXPECT_EQ(fw.brain().published(), published);
  EXPECT_TRUE(one(cp.handle_line(0, R"({"type":"status_request"})"))["brain_frozen"]);
  const auto rows = fw.recorder().snapshot();
  EXPECT_EQ(rows.size(), 2400u);
  // Once the last waypoint is behind the clock the setpoint is held.
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double t = static_cast<double>(rows[k].cycle + 1) * 1e-3;
    if (t > last_t + 1e-9) {
      ASSERT_EQ(rows[k].setpoint, rows.back().setpoint) << k;
    }
  }
  fw.run_cycles(200);
  EXPECT_GT(fw.brain().published(), published);
  EXPECT_EQ(fw.spine().missed(), 0u);
}

TEST(ControlPlane, InvalidSwapReportsFailure) {
  Framework fw(lockstep_config("cp_badswap"));
  ControlPlane cp(fw, ephemeral());
  fw.start();
  const json q = one(cp.handle_line(0, R"({"type":"swap_request","name":"bad","source":"nope"})"));
  EXPECT_EQ(q["type"], "swap_status");
  ASSERT_TRUE(fw.loader().wait_idle(60));
  const auto t = fw.loader().ticket(q["ticket"].get<std::uint64_t>());
  ASSERT_TRUE(t);
  EXPECT_EQ(t->stage, BuildStage::failed);
  EXPECT_FALSE(t->diagnostics.empty());
  const json bad_name =
      one(cp.handle_line(0, R"({"type":"swap_request","name":"no spaces","source":"x"})"));
  EXPECT_EQ(bad_name["stage"], "failed");
  const json bad_tpl = one(cp.handle_line(0, R"({"type":"swap_request","template":"nosuch"})"));
  EXPECT_EQ(bad_tpl["type"], "error");
  const json missing = one(cp.handle_line(0, R"({"type":"swap_request","template":"pd","params":{"kp":1}})"));
  EXPECT_EQ(missing["type"], "error");
}

TEST(ControlPlane, MalformedInputGetsErrors) {
  Framework fw(lockstep_config("cp_malformed"));
  ControlPlane cp(fw, ephemeral());
  for (const char* line : {"not json", "[1,2]", R"({"no_type":1})", R"({"type":5})",
                           R"({"type":"dance"})", R"({"type":"telemetry"})",
                           R"({"type":"fault","kind":"meteor"})",
                           R"({"type":"fault","duration_ms":-3})",
                           R"({"type":"trajectory","points":[[0.1]]})",
                           R"({"type":"trajectory","points":[{"t":"x","position":1}]})"}) {
    const json r = one(cp.handle_line(0, line));
    EXPECT_EQ(r["type"], "error") << line;
    EXPECT_TRUE(r["error"].is_string()) << line;
  }
  // Unknown fields are ignored.
  EXPECT_EQ(one(cp.handle_line(0, R"({"type":"status_request","extra":[1]})"))["type"], "status");
}

TEST(ControlPlane, TrajectoryTokenIsExclusive) {
  FrameworkConfig cfg = lockstep_config("cp_token");
  Framework fw(cfg);
  ControlPlane cp(fw, ephemeral());
  fw.start();
  fw.run_cycles(10);
  const json a = one(cp.handle_line(
      7, R"({"type":"trajectory","points":[[1.0,0.1],[1.01,0.2],{"t":1.02,"position":0.3}]})"));
  EXPECT_EQ(a["accepted"], 3);
  EXPECT_FALSE(fw.brain().generator_enabled());
  const json b = one(cp.handle_line(8, R"({"type":"trajectory","points":[[2.0,0.1]]})"));
  EXPECT_EQ(b["type"], "error");
  const json dup = one(cp.handle_line(7, R"({"type":"trajectory","points":[[1.02,0.5]]})"));
  EXPECT_EQ(dup["type"], "error");
  one(cp.handle_line(7, R"({"type":"trajectory","release":true})"));
  EXPECT_TRUE(fw.brain().generator_enabled());
  EXPECT_EQ(one(cp.handle_line(8, R"({"type":"trajectory","points":[[2.0,0.1]]})"))["accepted"], 1);
}

TEST(ControlPlane, SocketRoundTrip) {
  FrameworkConfig cfg;
  cfg.lock_memory = false;
  cfg.loader.work_dir = lithe_test::work_dir("cp_socket");
  cfg.loader.flags = {"-std=c++20", "-O0", "-fPIC", "-shared"};
  Framework fw(cfg);
  ControlPlane cp(fw, ephemeral());
  cp.start();
  ASSERT_GT(cp.port(), 0);
  fw.start();
  LineClient c(cp.port());
  ASSERT_TRUE(c.ok());
  c.send(R"({"type":"status_request"})");
  const json s = c.next("status");
  ASSERT_FALSE(s.is_null());
  EXPECT_EQ(s["clients"], 1);

  const json t1 = c.next("telemetry");
  const json t2 = c.next("telemetry");
  ASSERT_FALSE(t1.is_null());
  ASSERT_FALSE(t2.is_null());
  for (const char* k : {"t", "cycle", "theta", "omega", "setpoint", "torque", "release_jitter_ns",
                        "handoff_ns", "controller"}) {
    EXPECT_TRUE(t1.contains(k)) << k;
  }
  EXPECT_EQ(t1["cycle"].get<std::uint64_t>() % 10, 0u);
  EXPECT_GT(t2["cycle"].get<std::uint64_t>(), t1["cycle"].get<std::uint64_t>());

  c.send(R"({"type":"swap_request","template":"pd","name":"net_pd","params":{"kp":3,"kd":0.1}})");
  json st;
  do {
    st = c.next("swap_status", 60);
  } while (!st.is_null() && st["stage"] != "active" && st["stage"] != "failed");
  ASSERT_FALSE(st.is_null());
  EXPECT_EQ(st["stage"], "active");
  EXPECT_EQ(st["name"], "net_pd");
  json tel;
  do {
    tel = c.next("telemetry");
  } while (!tel.is_null() && tel["controller"] != "net_pd");
  EXPECT_FALSE(tel.is_null());

  c.send("{broken");
  EXPECT_EQ(c.next("error")["error"].get<std::string>().rfind("malformed", 0), 0u);
  c.send(R"({"type":"status_request"})");
  EXPECT_FALSE(c.next("status").is_null()) << "connection survives a malformed line";

  // A second server on the same port fails to start.
  ControlPlaneConfig same = ephemeral();
  same.port = cp.port();
  ControlPlane other(fw, same);
  EXPECT_THROW(other.start(), std::system_error);
  cp.stop();
  fw.stop();
}

TEST(ControlPlane, SlowClientDropsFramesWithoutBlocking) {
  FrameworkConfig cfg = lockstep_config("cp_slow");
  Framework fw(cfg);
  ControlPlaneConfig c = ephemeral();
  c.client_queue_frames = 4;
  c.telemetry_hz = 1000;
  ControlPlane cp(fw, c);
  cp.start();
  LineClient client(cp.port());  // never reads
  ASSERT_TRUE(client.ok());
  for (int i = 0; i < 200 && cp.client_count() == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  fw.start();
  fw.run_cycles(200000);
  EXPECT_GT(cp.frames_dropped(), 0u);
  EXPECT_EQ(fw.spine().executed_cycles(), 200000u);
  cp.stop();
}

TEST(Demo, EstimateMgl) {
  EXPECT_NEAR(estimate_mgl({{0.6, 0.5236}}), 1.2, 1e-4);
  EXPECT_NEAR(estimate_mgl({{0.4, std::asin(1.0 / 3)}, {0.6, std::asin(0.5)}}), 1.2, 1e-12);
  try {
    estimate_mgl({{0.4, 0.3}, {0.6, 0.01}});
    FAIL();
  } catch (const DemoError& e) {
    EXPECT_NE(std::string(e.what()).find("probe 1"), std::string::npos) << e.what();
  }
}

TEST(Demo, FullLockstepRun) {
  const DemoPlan plan;
  FrameworkConfig cfg = demo_framework_config(plan, ClockMode::lockstep);
  cfg.loader.work_dir = lithe_test::work_dir("demo");
  Framework fw(cfg);
  fw.start();
  const DemoReport r = run_demo(fw, plan);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_LE(r.evolved_rmse_deg, 0.5 * r.baseline_rmse_deg);
  EXPECT_GT(r.evolved_rmse_deg, r.retune_rmse_deg);
  EXPECT_NEAR(r.mgl_estimate, 1.2, 0.02 * 1.2);
  ASSERT_EQ(r.probes.size(), 2u);
  EXPECT_NEAR(r.probes[0].theta_ss, std::asin(0.4 / 1.2), 1e-3);
  EXPECT_NEAR(r.probes[1].theta_ss, std::asin(0.6 / 1.2), 1e-3);
  EXPECT_LT(r.freeze_drift_max, 0.05);
  EXPECT_FALSE(r.estop);
  EXPECT_EQ(r.missed, 0u);
  EXPECT_LE(r.handover_max_step, 3 * r.steady_max_step);
  // The evolved law adds a gravity term; the baseline has none.
  EXPECT_EQ(r.baseline_source.find("sin("), std::string::npos);
  EXPECT_NE(r.evolved_source.find("std::sin(state->position)"), std::string::npos);

  const auto out = lithe_test::work_dir("demo_out");
  write_demo_outputs(r, out);
  std::ofstream(out / "oracle.py") << R"(import csv, json, math, sys
d = sys.argv[1]
P = 0.001
summary = json.load(open(d + "/phases.json"))
end = [p for p in summary["phases"] if p["name"] == "baseline"][0]["end"]
n0, n1 = round((end - 3.0 + P) / P), round((end + P) / P)
errs = [(float(r["setpoint"]) - float(r["theta"])) ** 2
        for r in csv.DictReader(open(d + "/trace.csv"))
        if n0 <= round(float(r["t"]) / P) < n1]
print(repr(math.degrees(math.sqrt(sum(errs) / len(errs)))), len(errs))
)";
  std::istringstream res(lithe_test::capture("python3 " + (out / "oracle.py").string() + " " +
                                             out.string()));
  double offline = 0;
  std::size_t n = 0;
  res >> offline >> n;
  EXPECT_EQ(n, 3000u);
  EXPECT_NEAR(offline, r.baseline_rmse_deg, 1e-9);
}

TEST(Config, ParsesSectionsAndRejectsUnknownKeys) {
  const AppConfig c = parse_config(R"({
    // comments are allowed
    "mode": "lockstep",
    "spine": {"rate_hz": 500, "miss_policy": "estop"},
    "plant": {"mgl": 1.5, "theta0": 0.2},
    "bus": {"dispatch_latency_s": 1e-4},
    "safety": {"torque_limit": 2.0},
    "cores": {"spine": 2},
    "fifo_priority": 70,
    "control_plane": {"enabled": true, "port": 7500}
  })");
  EXPECT_EQ(c.framework.mode, ClockMode::lockstep);
  EXPECT_EQ(c.framework.spine.period_ns, 2'000'000);
  EXPECT_EQ(c.framework.spine.miss_policy, MissPolicy::estop);
  EXPECT_EQ(c.framework.plant.mgl, 1.5);
  EXPECT_EQ(c.framework.initial_plant.theta, 0.2);
  EXPECT_EQ(c.framework.bus.dispatch_latency, 1e-4);
  EXPECT_EQ(c.framework.spine.safety.torque_limit, 2.0);
  EXPECT_EQ(c.framework.cores.spine, 2);
  EXPECT_TRUE(c.framework.fifo_priority);
  EXPECT_EQ(c.framework.fifo_level, 70);
  EXPECT_TRUE(c.control_plane.enabled);
  EXPECT_EQ(c.control_plane.port, 7500);

  EXPECT_THROW(parse_config(R"({"spine": {"rate": 1000}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"bogus": {}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mode": "turbo"})"), ConfigError);
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config(R"({"plant": {"inertia": -1}})"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  AppConfig a;
  a.framework.plant.damping = 0.07;
  a.control_plane.telemetry_hz = 50;
  const AppConfig b = parse_config(dump_config(a));
  EXPECT_EQ(dump_config(a), dump_config(b));
  EXPECT_EQ(b.framework.plant.damping, 0.07);
}

TEST(Config, ShippedSimConfigLoads) {
  const AppConfig c = load_config(LITHE_SOURCE_DIR "/config/sim.json");
  EXPECT_EQ(c.framework.spine.period_ns, 1'000'000);
}

TEST(Wire, FramesMatchPublishedSchema) {
  if (std::system("python3 -c 'import jsonschema' 2>/dev/null") != 0) {
    GTEST_SKIP() << "python3 jsonschema not available";
  }
  const fs::path dir = lithe_test::work_dir("wire");
  FrameworkConfig cfg;
  cfg.lock_memory = false;
  cfg.loader.work_dir = dir / "loader";
  cfg.loader.flags = {"-std=c++20", "-O0", "-fPIC", "-shared"};
  Framework fw(cfg);
  ControlPlane cp(fw, ephemeral());
  cp.start();
  fw.start();
  LineClient c(cp.port());
  ASSERT_TRUE(c.ok());
  const std::vector<std::string> requests{
      R"({"type":"status_request"})",
      R"({"type":"trajectory","points":[[5.0,0.1],[5.1,0.2],{"t":5.2,"position":0.3}]})",
      R"({"type":"trajectory","release":true})",
      R"({"type":"swap_request","template":"pd","name":"w_pd","params":{"kp":3,"kd":0.1}})",
      R"({"type":"swap_request","name":"w_bad","source":"int lithe_control( {"})",
      R"({"type":"fault","kind":"freeze_brain","duration_ms":100})",
      R"({"type":"fault","kind":"estop"})",
  };
  int failed_or_active = 0;
  for (const auto& r : requests) {
    c.send(r);
    if (r.find("swap_request") != std::string::npos) continue;
    c.next(json::parse(r)["type"] == "status_request" ? "status" : json::parse(r)["type"].get<std::string>());
    if (r.find("freeze_brain") != std::string::npos) {
      // Both swaps settle before the estop.
      for (json st; failed_or_active < 2 && !(st = c.next("swap_status", 60)).is_null();) {
        failed_or_active += st["stage"] == "active" || st["stage"] == "failed";
      }
    }
  }
  EXPECT_EQ(failed_or_active, 2);
  c.send("{broken");
  c.next("error");
  c.send(R"({"type":"telemetry"})");
  c.next("error");
  c.next("telemetry");
  cp.stop();
  fw.stop();

  std::ofstream(dir / "client.ndjson") << [&] {
    std::string all;
    for (const auto& r : requests) all += r + "\n";
    return all;
  }();
  std::ofstream out(dir / "server.ndjson");
  std::set<std::string> types;
  for (const auto& line : c.seen()) {
    out << line << "\n";
    types.insert(json::parse(line)["type"].get<std::string>());
  }
  out.close();
  for (const char* t : {"status", "telemetry", "swap_status", "trajectory", "fault", "error"}) {
    EXPECT_TRUE(types.count(t)) << t;
  }
  const fs::path script = dir / "validate.py";
  std::ofstream(script) << R"(import json, re, sys
import jsonschema
text = open(sys.argv[1]).read()
schema = json.loads(re.search(r"```json\n(.*?)```", text, re.S).group(1))
jsonschema.Draft202012Validator.check_schema(schema)
bad = 0
for path, side in ((sys.argv[2], "client"), (sys.argv[3], "server")):
    for line in open(path):
        msg = json.loads(line)
        defs = [d for d in schema["$defs"].values() if d["direction"] == side]
        hits = sum(jsonschema.Draft202012Validator(d).is_valid(msg) for d in defs)
        if hits != 1 or not jsonschema.Draft202012Validator(schema).is_valid(msg):
            print(side, hits, line.strip()[:200])
            bad += 1
print("bad", bad)
sys.exit(1 if bad else 0)
)";
  const std::string cmd = "python3 " + script.string() + " " LITHE_SOURCE_DIR "/docs/wire.md " +
                          (dir / "client.ndjson").string() + " " +
                          (dir / "server.ndjson").string();
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}
