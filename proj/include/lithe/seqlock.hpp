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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <type_traits>

namespace lithe {

inline void cpu_relax() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#elif defined(__aarch64__)
  asm volatile("yield" ::: "memory");
#endif
}

inline constexpr unsigned kDefaultRetryBudget = 64;

/// Seqlock over raw memory. The counter and the payload live in the shared
/// segment; the payload is moved in 8-byte words through relaxed atomics so
/// that a concurrent reader never races in the language-model sense. Payload
/// regions are padded to 64 bytes by the layout planner, so rounding the
/// copy up to whole words never leaves the region.
template <class T>
class SeqlockCell {
  static_assert(std::is_trivially_copyable_v<T>);
  static constexpr std::size_t kWords = (sizeof(T) + 7) / 8;

 public:
  struct ReadResult {
    T value;
    unsigned retries;
    bool ok;
    std::uint64_t seq;  // counter value the snapshot was taken under
  };

  SeqlockCell() = default;
  SeqlockCell(void* counter, void* payload) noexcept
      : seq_(static_cast<std::uint64_t*>(counter)), payload_(static_cast<std::uint64_t*>(payload)) {}

  bool valid() const noexcept { return seq_ != nullptr; }

  /// Single writer only. Bounded: no loop depends on reader activity.
  void write(const T& value) noexcept {
    std::uint64_t words[kWords] = {};
    std::memcpy(words, &value, sizeof(T));
    std::atomic_ref<std::uint64_t> seq(*seq_);
    const std::uint64_t s = seq.load(std::memory_order_relaxed);
    seq.store(s + 1, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    for (std::size_t i = 0; i < kWords; ++i) {
      std::atomic_ref<std::uint64_t>(payload_[i]).store(words[i], std::memory_order_relaxed);
    }
    seq.store(s + 2, std::memory_order_release);
  }

  /// Attempts up to 1 + max_retries snapshots. On failure `value` holds the
  /// last (possibly torn) copy and must not be used.
  ReadResult read(unsigned max_retries = kDefaultRetryBudget) const noexcept {
    std::atomic_ref<std::uint64_t> seq(*seq_);
    std::uint64_t words[kWords] = {};
    ReadResult r{};
    for (unsigned attempt = 0;; ++attempt) {
      const std::uint64_t s1 = seq.load(std::memory_order_acquire);
      if ((s1 & 1U) == 0) {
        for (std::size_t i = 0; i < kWords; ++i) {
          words[i] = std::atomic_ref<std::uint64_t>(payload_[i]).load(std::memory_order_relaxed);
        }
        std::atomic_thread_fence(std::memory_order_acquire);
        const std::uint64_t s2 = seq.load(std::memory_order_acquire);
        if (s1 == s2) {
          std::memcpy(&r.value, words, sizeof(T));
          r.retries = attempt;
          r.ok = true;
          r.seq = s1;
          return r;
        }
      }
      if (attempt >= max_retries) {
        std::memcpy(&r.value, words, sizeof(T));
        r.retries = attempt;
        r.ok = false;
        return r;
      }
      cpu_relax();
    }
  }

  std::uint64_t sequence() const noexcept {
    return std::atomic_ref<std::uint64_t>(*seq_).load(std::memory_order_acquire);
  }

  // Test hooks: leave the counter odd as a writer frozen mid-write would.
  void begin_write_for_test() noexcept {
    std::atomic_ref<std::uint64_t>(*seq_).fetch_add(1, std::memory_order_release);
  }
  void end_write_for_test() noexcept { begin_write_for_test(); }

 private:
  std::uint64_t* seq_ = nullptr;
  std::uint64_t* payload_ = nullptr;
};

}  // namespace lithe
