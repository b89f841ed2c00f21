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

#include "lithe/alloc_guard.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>

namespace lithe::alloc_guard {

namespace {

thread_local int depth = 0;
std::atomic<std::uint64_t> count{0};
std::atomic<Mode> current_mode{Mode::count};

}  // namespace

void set_mode(Mode m) noexcept { current_mode.store(m); }
Mode mode() noexcept { return current_mode.load(); }
bool inside() noexcept { return depth > 0; }
std::uint64_t violations() noexcept { return count.load(); }
void reset_violations() noexcept { count.store(0); }

void record_violation() noexcept {
  count.fetch_add(1);
  if (current_mode.load() == Mode::abort) {
    std::fputs("lithe: allocation on the cyclic path\n", stderr);
    std::abort();
  }
}

Scope::Scope() noexcept { ++depth; }
Scope::~Scope() { --depth; }

}  // namespace lithe::alloc_guard
