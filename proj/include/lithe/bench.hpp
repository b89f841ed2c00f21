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

#include <array>
#include <atomic>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lithe/framework.hpp"
#include "lithe/isolation.hpp"

namespace lithe {

enum class StressKind { none, matrix_invert, cache_thrash };
std::optional<StressKind> parse_stress_kind(std::string_view name) noexcept;
std::string_view stress_kind_name(StressKind k) noexcept;

struct StressSpec {
  StressKind kind = StressKind::none;
  std::size_t matrix_dim = 600;
  std::size_t thrash_bytes = std::size_t{64} << 20;
  std::size_t fft_size = std::size_t{1} << 20;
  int threads = 0;                 // 0: one per permitted core ("all")
  std::vector<int> target_cores;   // empty: inherited affinity
  std::vector<std::string> external_command;  // optional extra stressor process
};

/// Inverts the row-major n x n matrix with LU and partial pivoting. Returns
/// false for a singular matrix.
bool invert_matrix(const std::vector<double>& a, std::size_t n, std::vector<double>& inv);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x, bool inverse = false);

/// Background stress thread pool. Runs until stop() or destruction.
class StressWorkload {
 public:
  explicit StressWorkload(StressSpec spec);
  ~StressWorkload();
  StressWorkload(const StressWorkload&) = delete;
  StressWorkload& operator=(const StressWorkload&) = delete;

  void start();
  void stop();

  bool failed() const noexcept { return failed_.load(); }
  std::string error() const;
  std::uint64_t iterations() const noexcept { return iterations_.load(); }
  std::size_t thread_count() const noexcept { return workers_.size(); }

  /// Samples of the CPU each worker last ran on, taken from /proc every 5 ms.
  std::vector<std::uint64_t> core_samples() const;

 private:
  void worker(std::size_t index);
  void sampler();

  StressSpec spec_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> failed_{false};
  std::atomic<std::uint64_t> iterations_{0};
  mutable std::mutex mu_;
  std::string error_;
  std::vector<std::thread> workers_;
  std::vector<std::atomic<int>> tids_;
  std::thread sampler_;
  std::vector<std::uint64_t> samples_;
  int external_pid_ = -1;
};

struct Percentiles {
  double p50 = 0.0;
  double p99 = 0.0;
  double p999 = 0.0;
};

/// Nearest-rank percentiles.
Percentiles percentiles(std::vector<std::int64_t> values);

struct Histogram {
  double bin_width_us = 0.0;
  std::vector<std::uint64_t> bins;
  std::uint64_t overflow = 0;
  std::uint64_t total() const noexcept;
};

/// Bins [0, bins * width) with values below 0 counted in the first bin and
/// values at or above the range in the overflow bin.
Histogram make_histogram(const std::vector<std::int64_t>& values_ns, std::int64_t width_ns,
                         std::size_t bins);

struct BenchOptions {
  double duration_s = 10.0;
  double rate_hz = 1000.0;
  StressSpec stress;
  FrameworkConfig framework;  // mode is forced to realtime
  double warmup_s = 0.5;
};

struct BenchResult {
  bool valid = true;
  std::string invalid_reason;
  StressKind stress = StressKind::none;
  std::uint64_t expected_cycles = 0;
  std::uint64_t cycles = 0;  // executed in the window
  std::uint64_t missed = 0;  // skipped in the window
  std::uint64_t overruns = 0;
  std::int64_t wcet_handoff_ns = 0;
  std::int64_t max_release_jitter_ns = 0;
  Percentiles handoff;
  Percentiles jitter;
  Histogram hist_exec;
  Histogram hist_jitter;
  std::uint64_t workload_iterations = 0;
  std::vector<std::uint64_t> workload_core_samples;
  double spine_core_workload_share = 0.0;
  std::uint64_t major_faults = 0;
  IsolationReport isolation;
  std::vector<TickMetrics> ticks;
};

BenchResult run_bench(const BenchOptions& opt);

/// Fills the statistics of `r` from r.ticks.
void summarize_ticks(BenchResult& r);

/// Writes ticks.csv, hist_exec.csv, hist_jitter.csv and report.json.
void export_bench(const BenchResult& r, const std::filesystem::path& dir);

std::string bench_report_json(const BenchResult& r);

}  // namespace lithe
