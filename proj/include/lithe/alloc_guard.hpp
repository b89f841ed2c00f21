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

namespace lithe::alloc_guard {

// Marks regions that must not allocate (the cyclic path). The check itself
// lives in the replacement operator new of the `lithe_alloc_guard` object
// library; without it linked in, the scopes only maintain a counter.

enum class Mode { count, abort };

void set_mode(Mode mode) noexcept;
Mode mode() noexcept;
bool inside() noexcept;
std::uint64_t violations() noexcept;
void reset_violations() noexcept;
void record_violation() noexcept;

class Scope {
 public:
  Scope() noexcept;
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;
};

}  // namespace lithe::alloc_guard
