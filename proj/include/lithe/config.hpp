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
#include <filesystem>
#include <stdexcept>
#include <string>

#include "lithe/framework.hpp"

namespace lithe {

struct ControlPlaneConfig {
  bool enabled = false;
  std::string bind = "127.0.0.1";
  int port = 7410;
  double telemetry_hz = 100.0;
  double rmse_window_s = 2.0;
  std::size_t client_queue_frames = 256;
};

struct AppConfig {
  FrameworkConfig framework;
  ControlPlaneConfig control_plane;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the JSON config text. Every section is optional; unknown sections
/// and keys are errors so typos do not silently fall back to defaults.
AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::filesystem::path& path);

/// The effective configuration, including defaults, as JSON.
std::string dump_config(const AppConfig& cfg);

}  // namespace lithe
