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

#include "lithe/control_plane.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <numbers>
#include <system_error>

#include "json.hpp"
#include "lithe/isolation.hpp"
#include "lithe/templates.hpp"

namespace lithe {

namespace {

using nlohmann::json;

constexpr std::size_t kMaxLine = 1U << 20;
constexpr std::size_t kMaxReplies = 4096;

std::string frame(const json& j) {
  return j.dump() + "\n";
}

std::string error_frame(const std::string& msg, const std::string& request = {}) {
  json j{{"type", "error"}, {"error", msg}};
  if (!request.empty()) {
    j["request"] = request;
  }
  return frame(j);
}

void set_nonblocking(int fd) {
  const int fl = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, fl | O_NONBLOCK);
}

json ticket_json(const BuildTicket& t) {
  json j{{"type", "swap_status"},
         {"ticket", t.id},
         {"name", t.name},
         {"stage", std::string(stage_name(t.stage))}};
  if (t.controller_id != 0) {
    j["controller_id"] = t.controller_id;
  }
  if (t.stage == BuildStage::active) {
    j["activation_cycle"] = t.activation_cycle;
  }
  if (t.stage == BuildStage::failed) {
    j["error"] = t.error;
    j["diagnostics"] = t.diagnostics;
  }
  return j;
}

}  // namespace

std::optional<double> rmse_degrees(const std::vector<std::pair<double, double>>& samples) {
  if (samples.empty()) {
    return std::nullopt;
  }
  double sum = 0.0;
  for (const auto& [sp, th] : samples) {
    const double e = sp - th;
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(samples.size())) * 180.0 / std::numbers::pi;
}

void RmseWindow::push(double t, double setpoint, double theta) {
  samples_.push_back({t, setpoint, theta});
  while (!samples_.empty() && samples_.front().t <= t - window_) {
    samples_.pop_front();
  }
}

std::optional<double> RmseWindow::value() const {
  std::vector<std::pair<double, double>> v;
  v.reserve(samples_.size());
  for (const auto& s : samples_) {
    v.emplace_back(s.setpoint, s.theta);
  }
  return rmse_degrees(v);
}

ControlPlane::ControlPlane(Framework& fw, ControlPlaneConfig cfg)
    : fw_(fw), cfg_(std::move(cfg)), window_(cfg_.rmse_window_s) {
  const double rate = 1e9 / static_cast<double>(fw_.config().spine.period_ns);
  decimation_ = static_cast<std::uint64_t>(std::max(1.0, std::round(rate / cfg_.telemetry_hz)));
  names_[0] = "zero";
  listener_id_ = fw_.add_metrics_listener([this](const TickMetrics& m) { on_tick(m); });
  fw_.loader().set_listener([this](const BuildTicket& t) { on_ticket(t); });
}

ControlPlane::~ControlPlane() {
  stop();
  fw_.loader().set_listener(nullptr);
  fw_.remove_metrics_listener(listener_id_);
}

void ControlPlane::start() {
  if (thread_.joinable()) {
    return;
  }
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) {
    throw std::system_error(errno, std::generic_category(), "socket");
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
  if (::inet_pton(AF_INET, cfg_.bind.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::system_error(EINVAL, std::generic_category(), "bad bind address " + cfg_.bind);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::system_error(err, std::generic_category(),
                            "cannot listen on " + cfg_.bind + ":" + std::to_string(cfg_.port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);
  set_nonblocking(listen_fd_);
  wake_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
  stop_.store(false);
  thread_ = std::thread([this] {
    pin_current_thread(fw_.config().cores.housekeeping);
    serve_loop();
  });
}

void ControlPlane::stop() {
  if (!thread_.joinable()) {
    return;
  }
  stop_.store(true);
  wake();
  thread_.join();
  std::lock_guard lock(clients_mu_);
  for (auto& [id, c] : clients_) {
    ::close(c.fd);
  }
  clients_.clear();
  ::close(listen_fd_);
  ::close(wake_fd_);
  listen_fd_ = wake_fd_ = -1;
}

void ControlPlane::wake() {
  if (wake_fd_ >= 0) {
    const std::uint64_t one = 1;
    [[maybe_unused]] const auto n = ::write(wake_fd_, &one, sizeof one);
  }
}

void ControlPlane::set_phase(std::string phase) {
  std::lock_guard lock(state_mu_);
  phase_ = std::move(phase);
}

std::size_t ControlPlane::client_count() const {
  std::lock_guard lock(clients_mu_);
  return clients_.size();
}

std::optional<double> ControlPlane::rmse() const {
  std::lock_guard lock(state_mu_);
  return window_.value();
}

std::string ControlPlane::controller_name(std::uint32_t id) const {
  std::lock_guard lock(state_mu_);
  const auto it = names_.find(id);
  return it == names_.end() ? "controller-" + std::to_string(id) : it->second;
}

void ControlPlane::on_tick(const TickMetrics& m) {
  const double t = static_cast<double>(m.cycle) *
                   static_cast<double>(fw_.config().spine.period_ns) * 1e-9;
  std::optional<double> rmse;
  std::string name;
  {
    std::lock_guard lock(state_mu_);
    window_.push(t, m.setpoint, m.theta);
    if (m.cycle % decimation_ != 0) {
      return;
    }
    rmse = window_.value();
    const auto it = names_.find(m.controller_id);
    name = it == names_.end() ? "controller-" + std::to_string(m.controller_id) : it->second;
  }
  if (client_count() == 0) {
    return;
  }
  json j{{"type", "telemetry"},
         {"t", t},
         {"cycle", m.cycle},
         {"theta", m.theta},
         {"omega", static_cast<double>(m.omega)},
         {"setpoint", m.setpoint},
         {"torque", m.torque},
         {"release_jitter_ns", m.release_jitter_ns},
         {"handoff_ns", m.handoff_ns},
         {"controller", name},
         {"controller_id", m.controller_id},
         {"flags", m.flags}};
  if (rmse) {
    j["rmse_window"] = *rmse;
  }
  broadcast(frame(j), true);
}

void ControlPlane::on_ticket(const BuildTicket& t) {
  {
    std::lock_guard lock(state_mu_);
    if (t.controller_id != 0) {
      names_[t.controller_id] = t.name;
    }
  }
  broadcast(frame(ticket_json(t)), false);
}

void ControlPlane::broadcast(const std::string& f, bool droppable) {
  {
    std::lock_guard lock(clients_mu_);
    for (auto& [id, c] : clients_) {
      const std::size_t cap = droppable ? cfg_.client_queue_frames : kMaxReplies;
      if (c.out.size() >= cap) {
        if (droppable) {
          frames_dropped_.fetch_add(1, std::memory_order_relaxed);
        }
        continue;
      }
      c.out.push_back(f);
      if (droppable) {
        frames_sent_.fetch_add(1, std::memory_order_relaxed);
      }
    }
  }
  wake();
}

void ControlPlane::enqueue(int client, std::string f) {
  {
    std::lock_guard lock(clients_mu_);
    const auto it = clients_.find(client);
    if (it == clients_.end() || it->second.out.size() >= kMaxReplies) {
      return;
    }
    it->second.out.push_back(std::move(f));
  }
  wake();
}

std::string ControlPlane::status_json() {
  Spine& sp = fw_.spine();
  const std::uint32_t id = fw_.active().active_id();
  const IsolationReport iso = fw_.isolation_report();
  json j{{"type", "status"},
         {"rate", 1e9 / static_cast<double>(sp.config().period_ns)},
         {"cycle", sp.executed_cycles()},
         {"miss_count", sp.missed()},
         {"grade", std::string(grade_name(iso.grade))},
         {"controller", controller_name(id)},
         {"controller_id", id},
         {"estop", sp.estopped()},
         {"brain_frozen", fw_.brain().frozen(fw_.now_s())},
         {"clients", client_count()}};
  std::lock_guard lock(state_mu_);
  j["phase"] = phase_;
  j["trajectory_token"] = token_holder_ == 0 ? "brain" : "client:" + std::to_string(token_holder_);
  return frame(j);
}

std::vector<std::string> ControlPlane::handle_line(int client, const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error&) {
    return {error_frame("malformed line: not JSON")};
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return {error_frame("message must be an object with a string 'type'")};
  }
  const std::string type = msg["type"].get<std::string>();
  try {
    if (type == "status_request") {
      return {status_json()};
    }
    if (type == "fault") {
      const std::string kind = msg.value("kind", std::string("freeze_brain"));
      if (kind == "freeze_brain") {
        const double ms = msg.value("duration_ms", 1500.0);
        if (!(ms > 0) || !std::isfinite(ms)) {
          return {error_frame("duration_ms must be positive", type)};
        }
        const double now = fw_.now_s();
        fw_.brain().freeze(now, ms * 1e-3);
        return {frame({{"type", "fault"}, {"kind", kind}, {"accepted", true},
                       {"until", fw_.brain().frozen_until()}})};
      }
      if (kind == "estop") {
        fw_.spine().request_estop();
        return {frame({{"type", "fault"}, {"kind", kind}, {"accepted", true}})};
      }
      return {error_frame("unknown fault kind '" + kind + "'", type)};
    }
    if (type == "trajectory") {
      {
        std::lock_guard lock(state_mu_);
        if (msg.value("release", false)) {
          if (token_holder_ == client) {
            token_holder_ = 0;
            fw_.brain().set_generator_enabled(fw_.config().brain.enabled);
          }
          return {frame({{"type", "trajectory"}, {"accepted", 0}, {"token", false}})};
        }
        if (token_holder_ != 0 && token_holder_ != client) {
          return {error_frame("trajectory token held by client " + std::to_string(token_holder_),
                              type)};
        }
      }
      if (!msg.contains("points") || !msg["points"].is_array()) {
        return {error_frame("trajectory needs a 'points' array", type)};
      }
      std::vector<Waypoint> pts;
      for (const auto& p : msg["points"]) {
        if (p.is_array() && p.size() == 2) {
          pts.push_back({p[0].get<double>(), p[1].get<double>()});
        } else if (p.is_object()) {
          pts.push_back({p.at("t").get<double>(), p.at("position").get<double>()});
        } else {
          return {error_frame("each point is [t, position] or {t, position}", type)};
        }
      }
      {
        std::lock_guard lock(state_mu_);
        if (token_holder_ == 0) {
          token_holder_ = client;
          fw_.brain().set_generator_enabled(false);
        }
      }
      std::size_t accepted = 0;
      const auto r = fw_.brain().publish(pts, fw_.now_s(), accepted);
      if (r == Brain::ExternalResult::frozen) {
        return {error_frame("trajectory publishing is frozen", type)};
      }
      if (r == Brain::ExternalResult::rejected) {
        return {error_frame("waypoint " + std::to_string(accepted) +
                                " rejected (non-monotone or non-finite)",
                            type)};
      }
      return {frame({{"type", "trajectory"}, {"accepted", accepted}, {"token", true}})};
    }
    if (type == "swap_request") {
      ControllerSource src;
      if (msg.contains("template")) {
        const std::string tname = msg["template"].get<std::string>();
        const std::string_view text = template_text(tname);
        std::map<std::string, std::string> params;
        if (msg.contains("params")) {
          for (const auto& [k, v] : msg["params"].items()) {
            params[k] = v.is_number() ? format_param(v.get<double>()) : v.get<std::string>();
          }
        }
        src.name = msg.value("name", tname);
        params.try_emplace("name", src.name);
        src.source_text = render(text, params);
      } else {
        src.name = msg.value("name", std::string());
        src.source_text = msg.value("source", std::string());
        if (src.source_text.empty()) {
          return {error_frame("swap_request needs 'source' or 'template'", type)};
        }
      }
      const auto sub = fw_.loader().submit(std::move(src));
      if (!sub.ok) {
        BuildTicket t;
        t.name = msg.value("name", std::string());
        t.stage = BuildStage::failed;
        t.error = sub.error;
        return {frame(ticket_json(t))};
      }
      {
        std::lock_guard lock(state_mu_);
        ticket_owner_[sub.ticket] = client;
      }
      const auto t = fw_.loader().ticket(sub.ticket);
      return {frame(ticket_json(t ? *t : BuildTicket{}))};
    }
    if (type == "telemetry" || type == "swap_status" || type == "status" || type == "error") {
      return {error_frame("'" + type + "' is a server-to-client message", type)};
    }
    return {error_frame("unknown message type '" + type + "'", type)};
  } catch (const TemplateError& e) {
    return {error_frame(e.what(), type)};
  } catch (const json::exception& e) {
    return {error_frame(std::string("bad field: ") + e.what(), type)};
  }
}

void ControlPlane::drop_client(int id) {
  std::lock_guard lock(clients_mu_);
  const auto it = clients_.find(id);
  if (it == clients_.end()) {
    return;
  }
  ::close(it->second.fd);
  clients_.erase(it);
  std::lock_guard slock(state_mu_);
  if (token_holder_ == id) {
    token_holder_ = 0;
    fw_.brain().set_generator_enabled(fw_.config().brain.enabled);
  }
}

void ControlPlane::serve_loop() {
  std::vector<pollfd> fds;
  std::vector<int> ids;
  char buf[65536];
  while (!stop_.load()) {
    fds.clear();
    ids.clear();
    fds.push_back({listen_fd_, POLLIN, 0});
    fds.push_back({wake_fd_, POLLIN, 0});
    {
      std::lock_guard lock(clients_mu_);
      for (auto& [id, c] : clients_) {
        short ev = POLLIN;
        if (!c.out.empty()) {
          ev |= POLLOUT;
        }
        fds.push_back({c.fd, ev, 0});
        ids.push_back(id);
      }
    }
    if (::poll(fds.data(), fds.size(), 200) < 0) {
      if (errno == EINTR) {
        continue;
      }
      break;
    }
    if (fds[1].revents & POLLIN) {
      std::uint64_t v;
      [[maybe_unused]] const auto n = ::read(wake_fd_, &v, sizeof v);
    }
    if (fds[0].revents & POLLIN) {
      for (;;) {
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
        if (fd < 0) {
          break;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, 1 /* TCP_NODELAY */, &one, sizeof one);
        std::lock_guard lock(clients_mu_);
        clients_[next_client_++].fd = fd;
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int id = ids[i];
      const short rev = fds[i + 2].revents;
      bool dead = (rev & (POLLERR | POLLNVAL)) != 0;
      if (!dead && (rev & (POLLIN | POLLHUP))) {
        const ssize_t n = ::read(fds[i + 2].fd, buf, sizeof buf);
        if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
          dead = true;
        } else if (n > 0) {
          std::vector<std::string> lines;
          {
            std::lock_guard lock(clients_mu_);
            auto& c = clients_[id];
            c.in.append(buf, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = c.in.find('\n')) != std::string::npos) {
              lines.push_back(c.in.substr(0, pos));
              c.in.erase(0, pos + 1);
            }
            if (c.in.size() > kMaxLine) {
              c.in.clear();
              c.out.push_back(error_frame("line too long"));
            }
          }
          for (auto& l : lines) {
            if (!l.empty() && l.back() == '\r') {
              l.pop_back();
            }
            if (l.find_first_not_of(" \t") == std::string::npos) {
              continue;
            }
            for (auto& r : handle_line(id, l)) {
              enqueue(id, std::move(r));
            }
          }
        }
      }
      if (!dead && (rev & POLLOUT)) {
        std::lock_guard lock(clients_mu_);
        auto& c = clients_[id];
        while (!c.out.empty()) {
          const std::string& f = c.out.front();
          const ssize_t n = ::send(c.fd, f.data() + c.out_offset, f.size() - c.out_offset,
                                   MSG_NOSIGNAL);
          if (n < 0) {
            dead = errno != EAGAIN && errno != EINTR;
            break;
          }
          c.out_offset += static_cast<std::size_t>(n);
          if (c.out_offset < f.size()) {
            break;
          }
          c.out.pop_front();
          c.out_offset = 0;
        }
      }
      if (dead) {
        drop_client(id);
      }
    }
  }
}

}  // namespace lithe
