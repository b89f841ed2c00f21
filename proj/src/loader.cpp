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

#include "lithe/loader.hpp"

#include <dlfcn.h>
#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sched.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lithe/isolation.hpp"
#include "lithe/plugin.h"
#include "lithe_layout.hpp"

extern char** environ;

namespace lithe {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Tickets are numbered process-wide so every artifact path is new to the
// dynamic linker, which would otherwise hand back a cached handle.
std::atomic<std::uint64_t> g_next_ticket{1};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string first_error;
  while (std::getline(in, line)) {
    if (first_error.empty() && line.find("error") != std::string::npos) {
      first_error = line;
    }
  }
  return first_error;
}

}  // namespace

std::string_view stage_name(BuildStage s) noexcept {
  switch (s) {
    case BuildStage::queued:
      return "queued";
    case BuildStage::compiling:
      return "compiling";
    case BuildStage::loading:
      return "loading";
    case BuildStage::verifying:
      return "verifying";
    case BuildStage::published:
      return "published";
    case BuildStage::active:
      return "active";
    case BuildStage::failed:
      return "failed";
  }
  return "?";
}

namespace {

// Takes ownership of `lib`; closes it on failure.
LoadResult verify_library(void* lib, const std::filesystem::path& artifact,
                          std::uint64_t expected_hash, std::uint32_t id) {
  LoadResult r;
  auto fail = [&](LoadError e, std::string msg) {
    ::dlclose(lib);
    r.error = e;
    r.message = std::move(msg);
    return std::move(r);
  };
  const auto* abi = static_cast<const lithe_abi_info*>(::dlsym(lib, "lithe_abi"));
  if (abi == nullptr) {
    return fail(LoadError::missing_symbol, "missing symbol lithe_abi");
  }
  auto* entry = reinterpret_cast<ControlFn>(::dlsym(lib, "lithe_control"));
  if (entry == nullptr) {
    return fail(LoadError::missing_symbol, "missing symbol lithe_control");
  }
  if (abi->abi_version != LITHE_ABI_VERSION) {
    return fail(LoadError::abi_mismatch, "abi_version " + std::to_string(abi->abi_version) +
                                             ", expected " + std::to_string(LITHE_ABI_VERSION));
  }
  if (abi->layout_hash != expected_hash) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "layout_hash %016llx, segment has %016llx",
                  static_cast<unsigned long long>(abi->layout_hash),
                  static_cast<unsigned long long>(expected_hash));
    return fail(LoadError::layout_mismatch, buf);
  }
  auto h = std::make_unique<ControllerHandle>();
  h->id = id;
  h->name.assign(abi->name, ::strnlen(abi->name, sizeof abi->name));
  h->abi_version = abi->abi_version;
  h->layout_hash = abi->layout_hash;
  h->library = lib;
  h->artifact = artifact;
  h->slot.entry = entry;
  h->slot.id = id;
  std::memcpy(h->slot.name, abi->name, sizeof h->slot.name);
  h->slot.name[sizeof h->slot.name - 1] = '\0';
  r.handle = std::move(h);
  return r;
}

void* open_library(const std::filesystem::path& artifact, std::string& error) {
  void* lib = ::dlopen(artifact.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (lib == nullptr) {
    const char* msg = ::dlerror();
    error = msg != nullptr ? msg : "dlopen failed";
  }
  return lib;
}

}  // namespace

LoadResult load_and_verify(const std::filesystem::path& artifact, std::uint64_t expected_hash,
                           std::uint32_t id) {
  std::string error;
  void* lib = open_library(artifact, error);
  if (lib == nullptr) {
    LoadResult r;
    r.error = LoadError::open_failed;
    r.message = error;
    return r;
  }
  return verify_library(lib, artifact, expected_hash, id);
}

bool unload(ControllerHandle& handle, std::string* error) {
  if (handle.library == nullptr) {
    return true;
  }
  if (::dlclose(handle.library) != 0) {
    if (error != nullptr) {
      const char* msg = ::dlerror();
      *error = msg != nullptr ? msg : "dlclose failed";
    }
    handle.library = nullptr;
    handle.state = ControllerHandle::State::unloaded;
    return false;
  }
  handle.library = nullptr;
  handle.slot.entry = nullptr;
  handle.state = ControllerHandle::State::unloaded;
  return true;
}

SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::filesystem::path& log, double timeout_s) {
  SubprocessResult res;
  std::vector<char*> args;
  args.reserve(argv.size() + 1);
  for (const auto& a : argv) {
    args.push_back(const_cast<char*>(a.c_str()));
  }
  args.push_back(nullptr);

  posix_spawn_file_actions_t fa;
  ::posix_spawn_file_actions_init(&fa);
  ::posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, log.c_str(),
                                     O_WRONLY | O_CREAT | O_TRUNC, 0644);
  ::posix_spawn_file_actions_adddup2(&fa, STDOUT_FILENO, STDERR_FILENO);
  ::posix_spawn_file_actions_addopen(&fa, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &fa, nullptr, args.data(), environ);
  ::posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) {
    res.output = "cannot start " + argv[0] + ": " + std::strerror(rc);
    return res;
  }
  res.started = true;
  const auto t0 = Clock::now();
  int status = 0;
  for (;;) {
    const pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) {
      break;
    }
    if (w < 0 && errno != EINTR) {
      break;
    }
    if (seconds_since(t0) > timeout_s) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      res.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!res.timed_out && WIFEXITED(status)) {
    res.exit_code = WEXITSTATUS(status);
  }
  res.output = read_file(log);
  return res;
}

Loader::Loader(LoaderConfig cfg, ActiveController& active, CycleSource cycles)
    : cfg_(std::move(cfg)), active_(active), cycles_(std::move(cycles)) {
  if (cfg_.compiler.empty()) {
    cfg_.compiler = LITHE_PLUGIN_CXX;
  }
  if (cfg_.include_dirs.empty()) {
    cfg_.include_dirs = {LITHE_PLUGIN_INCLUDE_DIR, LITHE_PLUGIN_GENERATED_DIR};
  }
  if (cfg_.expected_layout_hash == 0) {
    cfg_.expected_layout_hash = gen::kLayoutHash;
  }
}

Loader::~Loader() {
  stop();
  for (auto& h : handles_) {
    if (h->library != nullptr) {
      unload(*h);
    }
  }
}

void Loader::start() {
  if (thread_.joinable()) {
    return;
  }
  stop_.store(false);
  thread_ = std::thread([this] { thread_main(); });
}

void Loader::stop() {
  stop_.store(true, std::memory_order_release);
  cv_.notify_all();
  if (thread_.joinable()) {
    thread_.join();
  }
}

void Loader::set_listener(Listener l) {
  std::lock_guard lock(mu_);
  listener_ = std::move(l);
}

Loader::Submitted Loader::submit(ControllerSource src) {
  Submitted out;
  if (!valid_controller_name(src.name)) {
    out.error = "invalid controller name";
    return out;
  }
  if (src.source_text.empty()) {
    out.error = "empty source";
    return out;
  }
  BuildTicket t;
  {
    std::lock_guard lock(mu_);
    if (queue_.size() >= cfg_.queue_capacity) {
      out.error = "loader queue full";
      return out;
    }
    t.id = g_next_ticket.fetch_add(1);
    t.name = src.name;
    t.dir = cfg_.work_dir / std::to_string(t.id);
    tickets_.push_back(t);
    stage_log_.push_back(std::to_string(t.id) + ":queued");
    queue_.push_back({t.id, std::move(src)});
  }
  cv_.notify_all();
  Listener l;
  {
    std::lock_guard lock(mu_);
    l = listener_;
  }
  if (l) {
    l(t);
  }
  out.ok = true;
  out.ticket = t.id;
  return out;
}

std::optional<BuildTicket> Loader::ticket(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  for (const auto& t : tickets_) {
    if (t.id == id) {
      return t;
    }
  }
  return std::nullopt;
}

std::optional<BuildTicket> Loader::wait_for(std::uint64_t id, BuildStage stage,
                                            double timeout_s) const {
  std::unique_lock lock(mu_);
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  std::optional<BuildTicket> seen;
  for (;;) {
    seen.reset();
    for (const auto& t : tickets_) {
      if (t.id == id) {
        seen = t;
      }
    }
    if (!seen || seen->stage == BuildStage::failed ||
        static_cast<int>(seen->stage) >= static_cast<int>(stage)) {
      return seen;
    }
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      return seen;
    }
  }
}

bool Loader::wait_idle(double timeout_s) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, std::chrono::duration<double>(timeout_s),
                      [this] { return queue_.empty() && !busy_; });
}

std::vector<std::string> Loader::stage_log() const {
  std::lock_guard lock(mu_);
  return stage_log_;
}

std::vector<double> Loader::retire_delays() const {
  std::lock_guard lock(mu_);
  return retire_delays_;
}

void Loader::set_stage(std::uint64_t id, BuildStage stage,
                       const std::function<void(BuildTicket&)>& edit) {
  BuildTicket copy;
  Listener l;
  {
    std::lock_guard lock(mu_);
    for (auto& t : tickets_) {
      if (t.id == id) {
        t.stage = stage;
        if (edit) {
          edit(t);
        }
        copy = t;
      }
    }
    stage_log_.push_back(std::to_string(id) + ":" + std::string(stage_name(stage)));
    l = listener_;
  }
  cv_.notify_all();
  if (l) {
    l(copy);
  }
}

void Loader::thread_main() {
  std::string err;
  set_current_thread_affinity(cfg_.housekeeping_cores, &err);
  // Linux applies nice per thread; children spawned from here inherit it
  // together with the housekeeping affinity.
  ::setpriority(PRIO_PROCESS, static_cast<id_t>(::syscall(SYS_gettid)), cfg_.nice);
  if (cfg_.idle_priority) {
    // Compilers then only get cycles the real-time threads leave idle.
    sched_param sp{};
    ::sched_setscheduler(0, SCHED_IDLE, &sp);
  }
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, std::chrono::milliseconds(5),
                   [this] { return stopping() || !queue_.empty(); });
      if (stopping()) {
        break;
      }
      if (queue_.empty()) {
        continue;
      }
      job = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
    }
    process(job);
    {
      std::lock_guard lock(mu_);
      busy_ = false;
    }
    cv_.notify_all();
  }
}

void Loader::drain_retired(bool force) {
  const ControllerSlot* old = nullptr;
  while (active_.pop_retired(old)) {
    for (auto& h : handles_) {
      if (&h->slot == old) {
        h->state = ControllerHandle::State::retiring;
        retiring_.push_back({h.get(), cycles_.executed_cycles ? cycles_.executed_cycles() : 0,
                             std::chrono::duration<double>(Clock::now().time_since_epoch()).count()});
      }
    }
  }
  for (auto it = retiring_.begin(); it != retiring_.end();) {
    const bool running = cycles_.running ? cycles_.running() : false;
    const std::uint64_t executed = cycles_.executed_cycles ? cycles_.executed_cycles() : 0;
    if (force || !running || executed >= it->successor_activation_executed + cfg_.grace_cycles) {
      unload(*it->handle);
      live_.fetch_sub(1);
      unloaded_.fetch_add(1);
      const double now = std::chrono::duration<double>(Clock::now().time_since_epoch()).count();
      {
        std::lock_guard lock(mu_);
        retire_delays_.push_back(now - it->activated_at);
      }
      it = retiring_.erase(it);
    } else {
      ++it;
    }
  }
}

void Loader::process(Job& job) {
  const std::uint64_t id = job.ticket;
  const std::filesystem::path dir = cfg_.work_dir / std::to_string(id);
  auto fail = [&](std::string error, std::string diagnostics) {
    set_stage(id, BuildStage::failed, [&](BuildTicket& t) {
      t.error = std::move(error);
      if (!diagnostics.empty()) {
        t.diagnostics = std::move(diagnostics);
      }
    });
  };

  // compiling
  auto t0 = Clock::now();
  set_stage(id, BuildStage::compiling, nullptr);
  const auto source = dir / "controller.cpp";
  const auto artifact = dir / ("lib" + job.src.name + ".so");
  {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(source, std::ios::binary | std::ios::trunc);
    out << job.src.source_text;
    out.close();
    if (ec || !out) {
      fail("cannot write " + source.string(), {});
      return;
    }
  }
  std::vector<std::string> argv{cfg_.compiler};
  argv.insert(argv.end(), cfg_.flags.begin(), cfg_.flags.end());
  for (const auto& inc : cfg_.include_dirs) {
    argv.push_back("-I" + inc);
  }
  argv.push_back("-o");
  argv.push_back(artifact.string());
  argv.push_back(source.string());
  const SubprocessResult cr = run_subprocess(argv, dir / "compile.log", cfg_.compile_timeout_s);
  const double compile_s = seconds_since(t0);
  if (!cr.started || cr.timed_out || cr.exit_code != 0) {
    std::string reason = !cr.started   ? "compiler did not start"
                         : cr.timed_out ? "compiler timed out"
                                        : "compilation failed (exit " +
                                              std::to_string(cr.exit_code) + ")";
    const std::string first = last_line(cr.output);
    if (!first.empty()) {
      reason += ": " + first;
    }
    set_stage(id, BuildStage::failed, [&](BuildTicket& t) {
      t.error = reason;
      t.diagnostics = cr.output;
      t.timings.compile_s = compile_s;
    });
    return;
  }

  // loading + verifying
  t0 = Clock::now();
  set_stage(id, BuildStage::loading, [&](BuildTicket& t) {
    t.timings.compile_s = compile_s;
    t.diagnostics = cr.output;
  });
  std::uint32_t cid = job.src.requested_id;
  if (cid == 0) {
    cid = next_id_++;
  } else if (cid >= next_id_) {
    next_id_ = cid + 1;
  }
  std::string open_error;
  void* lib = open_library(artifact, open_error);
  if (lib == nullptr) {
    fail(open_error, {});
    return;
  }
  set_stage(id, BuildStage::verifying, [&](BuildTicket& t) { t.timings.load_s = seconds_since(t0); });
  t0 = Clock::now();
  LoadResult lr = verify_library(lib, artifact, cfg_.expected_layout_hash, cid);
  if (!lr.handle) {
    fail(lr.message, {});
    return;
  }
  ControllerHandle* h = lr.handle.get();
  handles_.push_back(std::move(lr.handle));
  const std::size_t live = live_.fetch_add(1) + 1;
  std::size_t prev_max = max_live_.load();
  while (live > prev_max && !max_live_.compare_exchange_weak(prev_max, live)) {
  }
  const double verify_s = seconds_since(t0);

  // publish: one pending controller at a time.
  t0 = Clock::now();
  while (!active_.publish(&h->slot)) {
    if (stopping()) {
      fail("loader stopped before publish", {});
      return;
    }
    drain_retired(false);
    std::this_thread::sleep_for(std::chrono::microseconds(500));
  }
  h->state = ControllerHandle::State::published;
  set_stage(id, BuildStage::published, [&](BuildTicket& t) {
    t.controller_id = cid;
    t.timings.verify_s = verify_s;
    t.timings.publish_s = seconds_since(t0);
  });

  // Await the Spine's exchange.
  t0 = Clock::now();
  while (active_.pending()) {
    if (stopping()) {
      return;
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  h->state = ControllerHandle::State::active;
  for (auto& other : handles_) {
    if (other.get() != h && other->state == ControllerHandle::State::active) {
      other->state = ControllerHandle::State::retiring;
    }
  }
  const std::uint64_t activation = active_.activation_cycle();
  set_stage(id, BuildStage::active, [&](BuildTicket& t) {
    t.timings.activate_s = seconds_since(t0);
    t.activation_cycle = activation;
  });

  // Retire the predecessor before taking the next ticket, so at most two
  // controller libraries are mapped at any time.
  drain_retired(false);
  while (!retiring_.empty() && !stopping()) {
    std::this_thread::sleep_for(std::chrono::microseconds(500));
    drain_retired(false);
  }
  // Drop bookkeeping for handles that are gone.
  std::erase_if(handles_, [](const std::unique_ptr<ControllerHandle>& x) {
    return x->state == ControllerHandle::State::unloaded;
  });
}

}  // namespace lithe
