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

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lithe/layout.hpp"

namespace lithe::schema {

/// `primary` emits a C++ header (plain structs checked against the plan with
/// static_asserts, raw offset accessors, segment constants). `brain` emits a
/// Python module using struct.pack_into / unpack_from at the planned offsets.
enum class BindingTarget { primary, brain };

class UnsupportedTarget : public std::invalid_argument {
 public:
  explicit UnsupportedTarget(std::string_view name);
};

BindingTarget parse_target(std::string_view name);
std::vector<BindingTarget> parse_target_list(std::string_view comma_separated);

std::string emit_bindings(const LayoutPlan& plan, BindingTarget target);
std::string emit_bindings(const LayoutPlan& plan, std::string_view target);

/// File name the CLI writes for a target, e.g. `lithe_layout.hpp`.
std::string binding_file_name(const LayoutPlan& plan, BindingTarget target);

/// Writes one file per target into `out_dir` (created if needed). Files whose
/// content is unchanged are not rewritten. Returns the written paths.
std::vector<std::filesystem::path> write_bindings(const LayoutPlan& plan,
                                                  const std::vector<BindingTarget>& targets,
                                                  const std::filesystem::path& out_dir);

}  // namespace lithe::schema
