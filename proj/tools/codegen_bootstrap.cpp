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

// Build-time generator: the core library includes the header this emits, so
// it cannot depend on the full `lithe` CLI.

#include <cstdio>
#include <exception>

#include "lithe/codegen.hpp"

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: %s <schema> <out-dir> <targets>\n", argv[0]);
    return 2;
  }
  try {
    const auto plan = lithe::schema::compute_layout(lithe::schema::load_schema_file(argv[1]));
    lithe::schema::write_bindings(plan, lithe::schema::parse_target_list(argv[3]), argv[2]);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", argv[1], e.what());
    return 1;
  }
  return 0;
}
