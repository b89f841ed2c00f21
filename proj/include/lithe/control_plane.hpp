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
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lithe/config.hpp"
#include "lithe/framework.hpp"

namespace lithe {

/// sqrt(mean((setpoint - theta)^2)) in degrees; nullopt for an empty series.
std::optional<double> rmse_degrees(const std::vector<std::pair<double, double>>& samples);

/// Trailing-window RMSE over (t, setpoint, theta) samples.
class RmseWindow {
 public:
  explicit RmseWindow(double window_s) : window_(window_s) {}
  void push(double t, double setpoint, double theta);
  std::optional<double> value() const;
  std::size_t size() const noexcept { return samples_.size(); }
  void clear() { samples_.clear(); }

 private:
  struct Sample {
    double t, setpoint, theta;
  };
  double window_;
  std::deque<Sample> samples_;
};

/// Local TCP service speaking newline-delimited JSON. Runs on housekeeping
/// threads and reaches the Spine only through the metrics queue, the ring
/// (via the Brain) and the loader.
class ControlPlane {
 public:
  ControlPlane(Framework& fw, ControlPlaneConfig cfg);
  ~ControlPlane();
  ControlPlane(const ControlPlane&) = delete;
  ControlPlane& operator=(const ControlPlane&) = delete;

  /// Binds and starts serving. Throws std::system_error if the port is busy.
  void start();
  void stop();
  int port() const noexcept { return bound_port_; }

  /// Handles one request line as if it came from `client` (0: in-process).
  /// Returns the direct replies; broadcasts go to every connected client.
  std::vector<std::string> handle_line(int client, const std::string& line);

  void set_phase(std::string phase);
  std::size_t client_count() const;
  std::uint64_t frames_sent() const noexcept { return frames_sent_.load(); }
  std::uint64_t frames_dropped() const noexcept { return frames_dropped_.load(); }
  std::optional<double> rmse() const;
  std::string controller_name(std::uint32_t id) const;

 private:
  struct Client {
    int fd = -1;
    std::string in;
    std::deque<std::string> out;
    std::size_t out_offset = 0;
    bool closing = false;
  };

  void on_tick(const TickMetrics& m);
  void on_ticket(const BuildTicket& t);
  void serve_loop();
  void broadcast(const std::string& frame, bool droppable);
  void enqueue(int client, std::string frame);
  void wake();
  void drop_client(int id);
  std::string status_json();

  Framework& fw_;
  ControlPlaneConfig cfg_;
  std::uint64_t decimation_ = 10;
  std::uint64_t listener_id_ = 0;

  mutable std::mutex state_mu_;
  RmseWindow window_;
  std::map<std::uint32_t, std::string> names_;
  std::map<std::uint64_t, int> ticket_owner_;
  std::string phase_ = "idle";
  int token_holder_ = 0;  // 0: in-process generator

  mutable std::mutex clients_mu_;
  std::map<int, Client> clients_;
  int next_client_ = 1;

  int listen_fd_ = -1;
  int wake_fd_ = -1;
  int bound_port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> frames_sent_{0};
  std::atomic<std::uint64_t> frames_dropped_{0};
  std::thread thread_;
};

}  // namespace lithe
