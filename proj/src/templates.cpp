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

#include "lithe/templates.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <utility>

namespace lithe {

bool valid_controller_name(std::string_view name) noexcept {
  if (name.empty() || name.size() > 31) {
    return false;
  }
  for (const char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) {
      return false;
    }
  }
  return name.front() != '.';
}

std::vector<std::string_view> template_names() {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < detail::kTemplateCount; ++i) {
    out.emplace_back(detail::kTemplates[i].name);
  }
  return out;
}

std::string_view template_text(std::string_view template_name) {
  for (std::size_t i = 0; i < detail::kTemplateCount; ++i) {
    if (template_name == detail::kTemplates[i].name) {
      return detail::kTemplates[i].text;
    }
  }
  throw TemplateError("unknown controller template '" + std::string(template_name) + "'");
}

std::string render(std::string_view text, const std::map<std::string, std::string>& params) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t open = text.find("${", i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    out.append(text.substr(i, open - i));
    const std::size_t close = text.find('}', open);
    if (close == std::string_view::npos) {
      throw TemplateError("unterminated placeholder");
    }
    const std::string key(text.substr(open + 2, close - open - 2));
    const auto it = params.find(key);
    if (it == params.end()) {
      throw TemplateError("no value for placeholder '" + key + "'");
    }
    out.append(it->second);
    i = close + 1;
  }
  return out;
}

std::string format_param(double v) {
  if (!std::isfinite(v)) {
    throw TemplateError("controller parameter is not finite");
  }
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".e") == std::string::npos) {
    s += ".0";
  }
  return s;
}

namespace {

ControllerSource make(std::string name, std::string_view tmpl,
                      std::map<std::string, std::string> params) {
  if (!valid_controller_name(name)) {
    throw TemplateError("invalid controller name '" + name + "'");
  }
  params["name"] = name;
  return {std::move(name), render(template_text(tmpl), params), 0};
}

}  // namespace

ControllerSource zero_controller_source() {
  return make("zero", "zero", {});
}

ControllerSource pd_source(std::string name, double kp, double kd) {
  return make(std::move(name), "pd", {{"kp", format_param(kp)}, {"kd", format_param(kd)}});
}

ControllerSource pd_detuned_source() {
  return pd_source("pd_detuned", 2.0, 0.05);
}

ControllerSource probe_constant_source(std::string name, double tau) {
  return make(std::move(name), "probe_constant", {{"tau", format_param(tau)}});
}

ControllerSource pd_gravity_source(std::string name, double kp, double kd, double mgl_est,
                                   int handover_cycles) {
  return make(std::move(name), "pd_gravity",
              {{"kp", format_param(kp)},
               {"kd", format_param(kd)},
               {"mgl_est", format_param(mgl_est)},
               {"handover_cycles", format_param(static_cast<double>(std::max(handover_cycles, 1)))}});
}

ControllerSource pd_i_source(std::string name, double kp, double ki, double kd) {
  return make(std::move(name), "pd_i",
              {{"kp", format_param(kp)}, {"ki", format_param(ki)}, {"kd", format_param(kd)}});
}

}  // namespace lithe
