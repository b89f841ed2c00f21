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

#include <gtest/gtest.h>
#include <sys/resource.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "lithe/codegen.hpp"
#include "lithe/framework.hpp"
#include "lithe/isolation.hpp"
#include "lithe/layout.hpp"
#include "lithe/schema.hpp"
#include "test_util.hpp"

using namespace lithe;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFastFlags = {"-std=c++20", "-O0", "-fPIC", "-shared"};

FrameworkConfig lockstep_config(const std::string& tag) {
  FrameworkConfig cfg;
  cfg.mode = ClockMode::lockstep;
  cfg.lock_memory = false;
  cfg.loader.work_dir = lithe_test::work_dir(tag);
  cfg.loader.flags = kFastFlags;
  return cfg;
}

// Builds `source` into a shared object with the framework's plugin headers.
fs::path build_so(const fs::path& dir, const std::string& source,
                  std::vector<std::string> include_dirs = {}) {
  std::ofstream(dir / "p.cpp") << source;
  std::vector<std::string> argv{"c++", "-std=c++20", "-O0", "-fPIC", "-shared"};
  for (auto& inc : include_dirs) {
    argv.push_back("-I" + inc);
  }
  argv.push_back("-I" LITHE_SOURCE_DIR "/include");
  argv.push_back("-I" LITHE_TEST_GENERATED_DIR);
  argv.push_back("-o");
  argv.push_back((dir / "libp.so").string());
  argv.push_back((dir / "p.cpp").string());
  const auto r = run_subprocess(argv, dir / "build.log", 120);
  EXPECT_EQ(r.exit_code, 0) << r.output;
  return dir / "libp.so";
}

const char* kMinimalPlugin = R"(
#include "lithe/plugin.h"
LITHE_PLUGIN("mini");
LITHE_CONTROL(state, setpoint, v, dt, persistent, out) {
  (void)v; (void)dt; (void)persistent;
  out->torque = setpoint - state->position;
  out->mode = 0;
  return 0;
}
)";

}  // namespace

TEST(LoadAndVerify, ShippedTemplateLoads) {
  const auto dir = lithe_test::work_dir("lv_ok");
  const auto so = build_so(dir, kMinimalPlugin);
  auto r = load_and_verify(so, gen::kLayoutHash, 77);
  ASSERT_TRUE(r.handle) << r.message;
  EXPECT_EQ(r.error, LoadError::none);
  EXPECT_EQ(r.handle->layout_hash, gen::kLayoutHash);
  EXPECT_EQ(r.handle->abi_version, 1u);
  EXPECT_EQ(r.handle->name, "mini");
  EXPECT_EQ(r.handle->slot.id, 77u);
  gen::RobotState x{};
  x.position = 0.25;
  gen::ActuatorCommand out{};
  double persistent[64] = {};
  EXPECT_EQ(r.handle->slot.entry(&x, 1.0, 0.0, 0.001, persistent, &out), 0);
  EXPECT_DOUBLE_EQ(out.torque, 0.75);
  EXPECT_TRUE(unload(*r.handle));
}

TEST(LoadAndVerify, MissingEntrySymbol) {
  const auto dir = lithe_test::work_dir("lv_sym");
  const auto so = build_so(dir, R"(
#include "lithe/plugin.h"
LITHE_PLUGIN("nosym");
)");
  const auto r = load_and_verify(so, gen::kLayoutHash, 1);
  EXPECT_FALSE(r.handle);
  EXPECT_EQ(r.error, LoadError::missing_symbol);
  EXPECT_NE(r.message.find("lithe_control"), std::string::npos) << r.message;
}

TEST(LoadAndVerify, AbiVersionMismatch) {
  const auto dir = lithe_test::work_dir("lv_abi");
  const auto so = build_so(dir, R"(
#include "lithe/plugin.h"
LITHE_EXPORT const lithe_abi_info lithe_abi = {2u, lithe::gen::kLayoutHash, "future"};
LITHE_CONTROL(state, setpoint, v, dt, persistent, out) {
  (void)state; (void)setpoint; (void)v; (void)dt; (void)persistent; (void)out;
  return 0;
}
)");
  const auto r = load_and_verify(so, gen::kLayoutHash, 1);
  EXPECT_FALSE(r.handle);
  EXPECT_EQ(r.error, LoadError::abi_mismatch);
}

TEST(LoadAndVerify, StaleSchemaRejected) {
  // Generate bindings for a schema with one extra field and build the plugin
  // against them; the generated header shadows the current one.
  const auto dir = lithe_test::work_dir("lv_stale");
  std::ifstream in(LITHE_SOURCE_DIR "/schema/lithe.schema");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  const auto pos = text.find("fault_flags: u32");
  ASSERT_NE(pos, std::string::npos);
  text.insert(pos + 16, ", spare: u32");
  const auto plan = schema::compute_layout(schema::parse_schema(text));
  ASSERT_NE(schema::layout_hash(plan), gen::kLayoutHash);
  fs::create_directories(dir / "gen");
  schema::write_bindings(plan, {schema::BindingTarget::primary}, dir / "gen");
  const auto so = build_so(dir, kMinimalPlugin, {(dir / "gen").string()});
  const auto r = load_and_verify(so, gen::kLayoutHash, 1);
  EXPECT_FALSE(r.handle);
  EXPECT_EQ(r.error, LoadError::layout_mismatch);
}

TEST(LoadAndVerify, NotASharedObject) {
  const auto dir = lithe_test::work_dir("lv_garbage");
  std::ofstream(dir / "libx.so") << "not an ELF file";
  const auto r = load_and_verify(dir / "libx.so", gen::kLayoutHash, 1);
  EXPECT_FALSE(r.handle);
  EXPECT_EQ(r.error, LoadError::open_failed);
}

TEST(Loader, SwapInPdReachesActive) {
  Framework fw(lockstep_config("swap_pd"));
  fw.start();
  fw.run_cycles(100);
  const BuildTicket t = fw.swap_to(pd_source("pd_a", 5.0, 0.2));
  ASSERT_EQ(t.stage, BuildStage::active) << t.error << t.diagnostics;
  EXPECT_GT(t.timings.compile_s, 0.0);
  EXPECT_EQ(fw.active().active_id(), t.controller_id);
  EXPECT_EQ(t.activation_cycle, 101u);
  EXPECT_TRUE(fs::exists(t.dir / "controller.cpp"));
  EXPECT_TRUE(fs::exists(t.dir / "libpd_a.so"));
  EXPECT_TRUE(fs::exists(t.dir / "compile.log"));
  fw.run_cycles(10);
  const auto rows = fw.recorder().snapshot();
  EXPECT_EQ(rows[100].controller_id, 0u);
  EXPECT_EQ(rows[101].controller_id, t.controller_id);
  const auto log = fw.loader().stage_log();
  const std::string id = std::to_string(t.id);
  const std::vector<std::string> expect{id + ":queued",    id + ":compiling", id + ":loading",
                                        id + ":verifying", id + ":published", id + ":active"};
  EXPECT_EQ(log, expect);
}

TEST(Loader, SyntaxErrorFailsWithDiagnostics) {
  Framework fw(lockstep_config("syntax"));
  fw.start();
  fw.run_cycles(10);
  const auto before = fw.active().active_id();
  ControllerSource src{"broken", "#include \"lithe/plugin.h\"\nthis is not C++;\n", 0};
  const BuildTicket t = fw.swap_to(src);
  EXPECT_EQ(t.stage, BuildStage::failed);
  EXPECT_NE(t.error.find("compilation failed"), std::string::npos) << t.error;
  EXPECT_NE(t.diagnostics.find("error"), std::string::npos);
  EXPECT_EQ(fw.active().active_id(), before);
  EXPECT_FALSE(fw.active().pending());
  EXPECT_EQ(fw.loader().live_libraries(), 0u);
}

TEST(Loader, BackToBackSubmissionsInOrder) {
  Framework fw(lockstep_config("order"));
  fw.start();
  const auto a = fw.loader().submit(pd_source("first", 1, 0.1));
  const auto b = fw.loader().submit({"second_bad", "garbage", 0});
  const auto c = fw.loader().submit(pd_source("third", 2, 0.1));
  ASSERT_TRUE(a.ok && b.ok && c.ok);
  // Step the loop while the loader works.
  for (int i = 0; i < 600000 && !fw.loader().wait_idle(0.0); ++i) {
    fw.run_cycles(1);
    std::this_thread::sleep_for(std::chrono::microseconds(50));
  }
  ASSERT_TRUE(fw.loader().wait_idle(30));
  EXPECT_EQ(fw.loader().ticket(a.ticket)->stage, BuildStage::active);
  EXPECT_EQ(fw.loader().ticket(b.ticket)->stage, BuildStage::failed);
  EXPECT_EQ(fw.loader().ticket(c.ticket)->stage, BuildStage::active);
  const auto log = fw.loader().stage_log();
  auto at = [&](const std::string& e) {
    return std::find(log.begin(), log.end(), e) - log.begin();
  };
  EXPECT_LT(at(std::to_string(a.ticket) + ":active"), at(std::to_string(b.ticket) + ":compiling"));
  EXPECT_LT(at(std::to_string(b.ticket) + ":failed"), at(std::to_string(c.ticket) + ":compiling"));
  EXPECT_EQ(fw.active().active_id(), fw.loader().ticket(c.ticket)->controller_id);
}

TEST(Loader, QueueCapacityAndNameChecks) {
  FrameworkConfig cfg = lockstep_config("queue");
  cfg.loader.queue_capacity = 2;
  Framework fw(cfg);
  EXPECT_FALSE(fw.loader().submit({"bad name!", "x", 0}).ok);
  EXPECT_FALSE(fw.loader().submit({"empty", "", 0}).ok);
  EXPECT_FALSE(fw.loader().submit({std::string(40, 'a'), "x", 0}).ok);
  // The loader thread is not started yet, so nothing drains the queue.
  EXPECT_TRUE(fw.loader().submit(pd_source("q1", 1, 0)).ok);
  EXPECT_TRUE(fw.loader().submit(pd_source("q2", 1, 0)).ok);
  const auto full = fw.loader().submit(pd_source("q3", 1, 0));
  EXPECT_FALSE(full.ok);
  EXPECT_NE(full.error.find("full"), std::string::npos) << full.error;
}

TEST(Loader, FiftySwapsKeepAtMostTwoLibraries) {
  Framework fw(lockstep_config("fifty"));
  fw.start();
  for (int i = 0; i < 50; ++i) {
    const auto t = fw.swap_to(pd_source("pd" + std::to_string(i), 2.0 + 0.01 * i, 0.05));
    ASSERT_EQ(t.stage, BuildStage::active) << i << " " << t.error;
    fw.run_cycles(20);
    ASSERT_LE(fw.loader().live_libraries(), 2u);
  }
  ASSERT_TRUE(fw.loader().wait_idle(30));
  EXPECT_LE(fw.loader().max_live_libraries(), 2u);
  EXPECT_EQ(fw.loader().unloaded_count(), 49u);
  EXPECT_EQ(fw.active().swaps(), 50u);
}

TEST(Loader, PdISelfSwapKeepsState) {
  auto run = [](const std::string& tag, bool swap) {
    Framework fw(lockstep_config(tag));
    fw.start();
    auto t = fw.swap_to(pd_i_source("pdi_a", 6.0, 4.0, 0.3));
    EXPECT_EQ(t.stage, BuildStage::active);
    fw.run_cycles(1500);
    if (swap) {
      // Same law, different library; loop time is frozen while it builds.
      t = fw.swap_to(pd_i_source("pdi_b", 6.0, 4.0, 0.3));
      EXPECT_EQ(t.stage, BuildStage::active);
      fw.run_cycles(1499);
    } else {
      fw.run_cycles(1500);
    }
    return fw.recorder().snapshot();
  };
  const auto a = run("pdi_plain", false);
  const auto b = run("pdi_swapped", true);
  ASSERT_EQ(a.size(), b.size());
  double worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    worst = std::max(worst, std::abs(a[k].torque - b[k].torque));
  }
  EXPECT_LE(worst, 1e-12);
  EXPECT_NE(a.back().controller_id, b.back().controller_id);
}

TEST(Loader, RealtimeRetirementWaitsForGraceCycles) {
  FrameworkConfig cfg;
  cfg.lock_memory = false;
  cfg.loader.work_dir = lithe_test::work_dir("retire_rt");
  cfg.loader.flags = kFastFlags;
  Framework fw(cfg);
  fw.start();
  for (int i = 0; i < 3; ++i) {
    const auto t = fw.swap_to(pd_source("rt" + std::to_string(i), 2.0, 0.05), 120);
    ASSERT_EQ(t.stage, BuildStage::active) << t.error;
  }
  ASSERT_TRUE(fw.loader().wait_idle(30));
  fw.stop();
  const auto delays = fw.loader().retire_delays();
  ASSERT_EQ(delays.size(), 2u);
  for (double d : delays) {
    EXPECT_GE(d, 0.010);
  }
}

TEST(Loader, RetirementCompletesAfterEstop) {
  FrameworkConfig cfg;
  cfg.lock_memory = false;
  cfg.loader.work_dir = lithe_test::work_dir("retire_estop");
  cfg.loader.flags = kFastFlags;
  Framework fw(cfg);
  fw.start();
  ASSERT_EQ(fw.swap_to(pd_source("e0", 2.0, 0.05)).stage, BuildStage::active);
  ASSERT_EQ(fw.swap_to(pd_source("e1", 2.0, 0.05)).stage, BuildStage::active);
  fw.spine().request_estop();
  ASSERT_TRUE(fw.loader().wait_idle(30));
  EXPECT_TRUE(fw.spine().estopped());
  EXPECT_EQ(fw.loader().unloaded_count(), 1u);
  fw.stop();
}

TEST(Subprocess, InheritsAffinityAndNice) {
  const auto dir = lithe_test::work_dir("affinity");
  std::vector<int> allowed;
  std::thread t([&] {
    ASSERT_TRUE(pin_current_thread(0));
    ::setpriority(PRIO_PROCESS, 0, 7);
    const auto r = run_subprocess({"sh", "-c", "grep Cpus_allowed_list /proc/self/status; "
                                               "cut -d' ' -f19 /proc/self/stat"},
                                  dir / "log", 10);
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_NE(r.output.find("Cpus_allowed_list:\t0\n"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("\n7\n"), std::string::npos) << r.output;
  });
  t.join();
  const auto log = dir / "log";
  EXPECT_TRUE(fs::exists(log));
}

TEST(Subprocess, TimeoutAndMissingBinary) {
  const auto dir = lithe_test::work_dir("timeout");
  const auto slow = run_subprocess({"sleep", "5"}, dir / "log", 0.2);
  EXPECT_TRUE(slow.timed_out);
  const auto missing = run_subprocess({"/nonexistent/cc"}, dir / "log2", 1);
  EXPECT_FALSE(missing.started);
}
