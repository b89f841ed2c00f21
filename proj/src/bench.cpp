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

#include "lithe/bench.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lithe/templates.hpp"

extern char** environ;

namespace lithe {

std::optional<StressKind> parse_stress_kind(std::string_view name) noexcept {
  if (name == "none") return StressKind::none;
  if (name == "matrix_invert" || name == "matrix") return StressKind::matrix_invert;
  if (name == "cache_thrash") return StressKind::cache_thrash;
  return std::nullopt;
}

std::string_view stress_kind_name(StressKind k) noexcept {
  switch (k) {
    case StressKind::none:
      return "none";
    case StressKind::matrix_invert:
      return "matrix_invert";
    case StressKind::cache_thrash:
      return "cache_thrash";
  }
  return "?";
}

bool invert_matrix(const std::vector<double>& a, std::size_t n, std::vector<double>& inv) {
  std::vector<double> lu = a;
  std::vector<std::size_t> piv(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(lu[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(lu[i * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (!(best > 0.0)) {
      return false;
    }
    piv[k] = p;
    if (p != k) {
      std::swap_ranges(lu.begin() + static_cast<std::ptrdiff_t>(k * n),
                       lu.begin() + static_cast<std::ptrdiff_t>((k + 1) * n),
                       lu.begin() + static_cast<std::ptrdiff_t>(p * n));
    }
    const double d = lu[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      double& l = lu[i * n + k];
      l /= d;
      for (std::size_t j = k + 1; j < n; ++j) {
        lu[i * n + j] -= l * lu[k * n + j];
      }
    }
  }
  // Solve L U x = P e_j for each column, working on the permuted identity.
  inv.assign(n * n, 0.0);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) {
    perm[i] = i;
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::swap(perm[k], perm[piv[k]]);
  }
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = perm[i] == j ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      for (std::size_t k = 0; k < i; ++k) {
        s -= lu[i * n + k] * x[k];
      }
      x[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x[ii];
      for (std::size_t k = ii + 1; k < n; ++k) {
        s -= lu[ii * n + k] * x[k];
      }
      x[ii] = s / lu[ii * n + ii];
    }
    for (std::size_t i = 0; i < n; ++i) {
      inv[i * n + j] = x[i];
    }
  }
  return true;
}

void fft_radix2(std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  if (n < 2) {
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(x[i], x[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& v : x) {
      v /= static_cast<double>(n);
    }
  }
}

StressWorkload::StressWorkload(StressSpec spec) : spec_(std::move(spec)) {}

StressWorkload::~StressWorkload() {
  stop();
}

std::string StressWorkload::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

std::vector<std::uint64_t> StressWorkload::core_samples() const {
  std::lock_guard lock(mu_);
  return samples_;
}

void StressWorkload::start() {
  if (!workers_.empty() || external_pid_ > 0) {
    return;
  }
  stop_.store(false);
  std::size_t n = 0;
  if (spec_.kind != StressKind::none) {
    n = spec_.threads > 0 ? static_cast<std::size_t>(spec_.threads)
                          : std::max<std::size_t>(1, spec_.target_cores.empty()
                                                         ? current_thread_affinity().size()
                                                         : spec_.target_cores.size());
  }
  tids_ = std::vector<std::atomic<int>>(n);
  samples_.assign(std::max<unsigned>(detected_cores(), 1), 0);
  for (std::size_t i = 0; i < n; ++i) {
    workers_.emplace_back([this, i] { worker(i); });
  }
  if (n > 0) {
    sampler_ = std::thread([this] { sampler(); });
  }
  if (!spec_.external_command.empty()) {
    std::vector<char*> argv;
    for (auto& a : spec_.external_command) {
      argv.push_back(a.data());
    }
    argv.push_back(nullptr);
    pid_t pid = -1;
    if (::posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ) == 0) {
      external_pid_ = pid;
    } else {
      std::lock_guard lock(mu_);
      failed_.store(true);
      error_ = "cannot launch " + spec_.external_command[0];
    }
  }
}

void StressWorkload::stop() {
  stop_.store(true);
  for (auto& t : workers_) {
    if (t.joinable()) {
      t.join();
    }
  }
  workers_.clear();
  if (sampler_.joinable()) {
    sampler_.join();
  }
  if (external_pid_ > 0) {
    ::kill(external_pid_, SIGTERM);
    int status = 0;
    ::waitpid(external_pid_, &status, 0);
    external_pid_ = -1;
  }
}

void StressWorkload::worker(std::size_t index) {
  tids_[index].store(static_cast<int>(::syscall(SYS_gettid)));
  if (!spec_.target_cores.empty()) {
    set_current_thread_affinity(spec_.target_cores);
  }
  std::mt19937_64 rng(0x5eed + index);
  auto fail = [this](const std::string& why) {
    std::lock_guard lock(mu_);
    failed_.store(true);
    if (error_.empty()) {
      error_ = why;
    }
  };
  if (spec_.kind == StressKind::matrix_invert) {
    const std::size_t n = spec_.matrix_dim;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(n * n), inv;
    while (!stop_.load(std::memory_order_relaxed)) {
      for (auto& v : a) {
        v = u(rng);
      }
      invert_matrix(a, n, inv);
      iterations_.fetch_add(1, std::memory_order_relaxed);
    }
    return;
  }
  // cache_thrash
  std::vector<std::complex<double>> x;
  try {
    x.resize(spec_.fft_size);
  } catch (const std::bad_alloc&) {
    fail("cannot allocate FFT buffer");
    return;
  }
  const std::size_t bytes = std::max<std::size_t>(spec_.thrash_bytes, 4096);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uint64_t round = 0;
  std::unique_ptr<unsigned char[]> buf;
  while (!stop_.load(std::memory_order_relaxed)) {
    if (round % 8 == 0) {
      buf.reset();
      buf.reset(new (std::nothrow) unsigned char[bytes]);
      if (!buf) {
        fail("cannot allocate thrash buffer");
        return;
      }
      std::memset(buf.get(), static_cast<int>(round & 0xff), bytes);
    }
    for (auto& v : x) {
      v = {u(rng), u(rng)};
    }
    fft_radix2(x);
    std::size_t idx = rng() % bytes;
    const std::size_t stride = 4096 * (1 + rng() % 61) + 64 * (rng() % 64) + 1;
    for (std::size_t i = 0; i < (std::size_t{1} << 20) && !stop_.load(std::memory_order_relaxed);
         ++i) {
      buf[idx] = static_cast<unsigned char>(buf[idx] + 1);
      idx += stride;
      if (idx >= bytes) {
        idx -= bytes;
      }
    }
    ++round;
    iterations_.fetch_add(1, std::memory_order_relaxed);
  }
}

void StressWorkload::sampler() {
  while (!stop_.load()) {
    for (auto& t : tids_) {
      const int tid = t.load();
      if (tid <= 0) {
        continue;
      }
      std::ifstream in("/proc/self/task/" + std::to_string(tid) + "/stat");
      std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      const auto close = s.rfind(')');
      if (close == std::string::npos) {
        continue;
      }
      std::istringstream fields(s.substr(close + 2));
      std::string f;
      // Field 39 (processor) is the 37th after the command name.
      for (int i = 0; i < 37 && (fields >> f); ++i) {
      }
      if (!fields) {
        continue;
      }
      const int cpu = std::atoi(f.c_str());
      std::lock_guard lock(mu_);
      if (cpu >= 0 && static_cast<std::size_t>(cpu) < samples_.size()) {
        ++samples_[static_cast<std::size_t>(cpu)];
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

Percentiles percentiles(std::vector<std::int64_t> v) {
  Percentiles p;
  if (v.empty()) {
    return p;
  }
  std::sort(v.begin(), v.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return static_cast<double>(v[std::clamp<std::size_t>(r, 1, v.size()) - 1]);
  };
  p.p50 = rank(0.50);
  p.p99 = rank(0.99);
  p.p999 = rank(0.999);
  return p;
}

std::uint64_t Histogram::total() const noexcept {
  std::uint64_t t = overflow;
  for (const auto b : bins) {
    t += b;
  }
  return t;
}

Histogram make_histogram(const std::vector<std::int64_t>& values, std::int64_t width_ns,
                         std::size_t bins) {
  Histogram h;
  h.bin_width_us = static_cast<double>(width_ns) * 1e-3;
  h.bins.assign(bins, 0);
  for (const auto v : values) {
    const std::int64_t b = v < 0 ? 0 : v / width_ns;
    if (b >= static_cast<std::int64_t>(bins)) {
      ++h.overflow;
    } else {
      ++h.bins[static_cast<std::size_t>(b)];
    }
  }
  return h;
}

void summarize_ticks(BenchResult& r) {
  std::vector<std::int64_t> handoff, jitter;
  handoff.reserve(r.ticks.size());
  jitter.reserve(r.ticks.size());
  for (const auto& m : r.ticks) {
    handoff.push_back(m.handoff_ns);
    jitter.push_back(m.release_jitter_ns);
  }
  r.cycles = r.ticks.size();
  r.wcet_handoff_ns = handoff.empty() ? 0 : *std::max_element(handoff.begin(), handoff.end());
  r.max_release_jitter_ns = jitter.empty() ? 0 : *std::max_element(jitter.begin(), jitter.end());
  r.hist_exec = make_histogram(handoff, 2000, 50);
  r.hist_jitter = make_histogram(jitter, 80, 50);
  r.handoff = percentiles(std::move(handoff));
  r.jitter = percentiles(std::move(jitter));
}

BenchResult run_bench(const BenchOptions& opt) {
  BenchResult r;
  r.stress = opt.stress.kind;
  FrameworkConfig cfg = opt.framework;
  cfg.mode = ClockMode::realtime;
  cfg.spine.period_ns = std::llround(1e9 / opt.rate_hz);
  const auto n = static_cast<std::uint64_t>(std::llround(opt.duration_s * opt.rate_hz));
  r.expected_cycles = n;
  cfg.record_limit = 0;

  Framework fw(cfg);
  fw.recorder().reserve(static_cast<std::size_t>(n + 4 * opt.rate_hz));
  fw.start();
  const BuildTicket t = fw.swap_to(pd_detuned_source(), 120.0);
  if (t.stage != BuildStage::active) {
    r.valid = false;
    r.invalid_reason = "controller swap failed: " + t.error;
  }

  StressWorkload load(opt.stress);
  load.start();
  std::this_thread::sleep_for(std::chrono::duration<double>(opt.warmup_s));
  const std::uint64_t faults0 = major_page_faults();
  const std::uint64_t overruns0 = fw.spine().overruns();
  const std::uint64_t dropped0 = fw.spine().dropped_metrics();
  const std::uint64_t c0 = fw.spine().next_cycle() + 1;
  while (fw.spine().next_cycle() < c0 + n + 1 && !fw.spine().estopped()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  r.overruns = fw.spine().overruns() - overruns0;
  r.major_faults = major_page_faults() - faults0;
  const bool dropped = fw.spine().dropped_metrics() != dropped0;
  load.stop();
  fw.stop();

  for (const auto& m : fw.recorder().snapshot()) {
    if (m.cycle >= c0 && m.cycle < c0 + n) {
      r.ticks.push_back(m);
    }
  }
  summarize_ticks(r);
  r.missed = n - r.cycles;
  r.workload_iterations = load.iterations();
  r.workload_core_samples = load.core_samples();
  std::uint64_t total = 0;
  for (const auto s : r.workload_core_samples) {
    total += s;
  }
  const auto spine_core = static_cast<std::size_t>(cfg.cores.spine);
  if (total > 0 && spine_core < r.workload_core_samples.size()) {
    r.spine_core_workload_share =
        static_cast<double>(r.workload_core_samples[spine_core]) / static_cast<double>(total);
  }
  r.isolation = fw.isolation_report();
  if (load.failed()) {
    r.valid = false;
    r.invalid_reason = "workload failed: " + load.error();
  } else if (fw.spine().estopped()) {
    r.valid = false;
    r.invalid_reason = "spine latched estop";
  } else if (dropped) {
    r.valid = false;
    r.invalid_reason = "metrics queue overflowed";
  } else if (opt.stress.kind != StressKind::none && r.workload_iterations == 0) {
    r.valid = false;
    r.invalid_reason = "workload made no progress";
  }
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_histogram(const Histogram& h, const std::filesystem::path& path, int digits) {
  std::ofstream out(path);
  out << "bin_lo_us,bin_hi_us,count\n";
  for (std::size_t i = 0; i < h.bins.size(); ++i) {
    out << fixed(h.bin_width_us * static_cast<double>(i), digits) << ','
        << fixed(h.bin_width_us * static_cast<double>(i + 1), digits) << ',' << h.bins[i] << '\n';
  }
  out << fixed(h.bin_width_us * static_cast<double>(h.bins.size()), digits) << ",inf,"
      << h.overflow << '\n';
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

}  // namespace

std::string bench_report_json(const BenchResult& r) {
  nlohmann::json j;
  j["valid"] = r.valid;
  if (!r.valid) {
    j["invalid_reason"] = r.invalid_reason;
  }
  j["stress"] = std::string(stress_kind_name(r.stress));
  j["expected_cycles"] = r.expected_cycles;
  j["cycles"] = r.cycles;
  j["missed"] = r.missed;
  j["overruns"] = r.overruns;
  j["wcet_handoff_us"] = static_cast<double>(r.wcet_handoff_ns) * 1e-3;
  j["max_release_jitter_us"] = static_cast<double>(r.max_release_jitter_ns) * 1e-3;
  auto pct = [](const Percentiles& p) {
    return nlohmann::json{{"p50_us", p.p50 * 1e-3}, {"p99_us", p.p99 * 1e-3}, {"p999_us", p.p999 * 1e-3}};
  };
  j["handoff"] = pct(r.handoff);
  j["release_jitter"] = pct(r.jitter);
  j["histogram_totals"] = {{"exec", r.hist_exec.total()}, {"jitter", r.hist_jitter.total()}};
  j["workload"] = {{"iterations", r.workload_iterations},
                   {"core_samples", r.workload_core_samples},
                   {"spine_core_share", r.spine_core_workload_share}};
  j["major_page_faults"] = r.major_faults;
  j["isolation"] = nlohmann::json::parse(report_json(r.isolation));
  return j.dump(2);
}

void export_bench(const BenchResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "ticks.csv");
    out << "cycle,release_jitter_ns,handoff_ns,missed\n";
    for (const auto& m : r.ticks) {
      out << m.cycle << ',' << m.release_jitter_ns << ',' << m.handoff_ns << ','
          << ((m.flags & kTickMissed) != 0 ? 1 : 0) << '\n';
    }
    if (!out) {
      throw std::runtime_error("cannot write ticks.csv");
    }
  }
  write_histogram(r.hist_exec, dir / "hist_exec.csv", 0);
  write_histogram(r.hist_jitter, dir / "hist_jitter.csv", 2);
  std::ofstream out(dir / "report.json");
  out << bench_report_json(r) << '\n';
  if (!out) {
    throw std::runtime_error("cannot write report.json");
  }
}

}  // namespace lithe
