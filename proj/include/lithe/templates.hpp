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

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lithe {

/// Controller source handed to the loader.
struct ControllerSource {
  std::string name;         // filesystem-safe, at most 31 characters
  std::string source_text;  // C++ translation unit using lithe/plugin.h
  std::uint32_t requested_id = 0;  // 0: loader assigns
};

bool valid_controller_name(std::string_view name) noexcept;

namespace detail {
struct EmbeddedTemplate {
  const char* name;
  const char* text;
};
extern const EmbeddedTemplate kTemplates[];
extern const std::size_t kTemplateCount;
}  // namespace detail

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string_view> template_names();
std::string_view template_text(std::string_view template_name);

/// Replaces every `${key}`; a placeholder without a value is an error.
std::string render(std::string_view text, const std::map<std::string, std::string>& params);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_param(double v);

ControllerSource zero_controller_source();
ControllerSource pd_source(std::string name, double kp, double kd);
ControllerSource pd_detuned_source();  // kp = 2.0, kd = 0.05
ControllerSource probe_constant_source(std::string name, double tau);
ControllerSource pd_gravity_source(std::string name, double kp, double kd, double mgl_est,
                                   int handover_cycles = 50);
ControllerSource pd_i_source(std::string name, double kp, double ki, double kd);

}  // namespace lithe
