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

#include "lithe/codegen.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace lithe::schema {

namespace {

std::string_view cpp_type(ScalarType t) {
  switch (t) {
    case ScalarType::u8:
      return "std::uint8_t";
    case ScalarType::u16:
      return "std::uint16_t";
    case ScalarType::u32:
      return "std::uint32_t";
    case ScalarType::u64:
      return "std::uint64_t";
    case ScalarType::i32:
      return "std::int32_t";
    case ScalarType::i64:
      return "std::int64_t";
    case ScalarType::f32:
      return "float";
    case ScalarType::f64:
      return "double";
  }
  return "void";
}

std::string_view py_format(ScalarType t) {
  switch (t) {
    case ScalarType::u8:
      return "<B";
    case ScalarType::u16:
      return "<H";
    case ScalarType::u32:
      return "<I";
    case ScalarType::u64:
      return "<Q";
    case ScalarType::i32:
      return "<i";
    case ScalarType::i64:
      return "<q";
    case ScalarType::f32:
      return "<f";
    case ScalarType::f64:
      return "<d";
  }
  return "";
}

bool is_float(ScalarType t) {
  return t == ScalarType::f32 || t == ScalarType::f64;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llxULL", static_cast<unsigned long long>(v));
  return buf;
}

std::string emit_primary(const LayoutPlan& plan) {
  std::ostringstream o;
  o << "// Generated by `lithe codegen` from segment \"" << plan.segment_name << "\" v"
    << plan.version << ". Do not edit.\n";
  o << "//\n// Canonical layout:\n";
  {
    std::istringstream lines(canonical_description(plan));
    std::string line;
    while (std::getline(lines, line)) {
      o << "//   " << line << '\n';
    }
  }
  o << "\n#pragma once\n\n"
       "#include <cstddef>\n#include <cstdint>\n#include <cstring>\n#include <type_traits>\n\n"
       "namespace lithe::gen {\n\n";
  o << "inline constexpr char kSegmentName[] = \"" << plan.segment_name << "\";\n";
  o << "inline constexpr std::uint32_t kSegmentVersion = " << plan.version << ";\n";
  o << "inline constexpr std::uint64_t kLayoutHash = " << hex64(plan.layout_hash) << ";\n";
  o << "inline constexpr std::size_t kHeaderSize = " << plan.header_size << ";\n";
  o << "inline constexpr std::size_t kTotalSize = " << plan.total_size << ";\n\n";

  for (const auto& rec : plan.records) {
    o << "struct " << rec.name << " {\n";
    for (const auto& f : rec.fields) {
      o << "  " << cpp_type(f.type) << ' ' << f.name << ';';
      if (!f.unit.empty()) {
        o << "  // " << f.unit;
      }
      o << '\n';
    }
    o << "};\n";
    o << "static_assert(std::is_standard_layout_v<" << rec.name
      << "> && std::is_trivially_copyable_v<" << rec.name << ">);\n";
    o << "static_assert(sizeof(" << rec.name << ") == " << rec.size << ", \"" << rec.name
      << " size differs from the layout plan\");\n";
    o << "static_assert(alignof(" << rec.name << ") == " << rec.alignment << ", \"" << rec.name
      << " alignment differs from the layout plan\");\n";
    for (const auto& f : rec.fields) {
      o << "static_assert(offsetof(" << rec.name << ", " << f.name << ") == " << f.offset
        << ", \"" << rec.name << '.' << f.name << " offset differs from the layout plan\");\n";
    }
    o << "\n// Raw accessors at the planned byte offsets.\nnamespace " << rec.name << "_raw {\n";
    o << "inline constexpr std::size_t kSize = " << rec.size << ";\n";
    for (const auto& f : rec.fields) {
      o << "inline constexpr std::size_t " << f.name << "_offset = " << f.offset << ";\n";
    }
    for (const auto& f : rec.fields) {
      const auto t = cpp_type(f.type);
      o << "inline " << t << " get_" << f.name << "(const void* rec) noexcept {\n"
        << "  " << t << " v;\n"
        << "  std::memcpy(&v, static_cast<const unsigned char*>(rec) + " << f.offset
        << ", sizeof v);\n  return v;\n}\n";
      o << "inline void set_" << f.name << "(void* rec, " << t << " v) noexcept {\n"
        << "  std::memcpy(static_cast<unsigned char*>(rec) + " << f.offset
        << ", &v, sizeof v);\n}\n";
    }
    o << "}  // namespace " << rec.name << "_raw\n\n";
  }

  o << "struct CellLayout {\n  std::size_t offset;\n  std::size_t size;\n"
       "  std::size_t payload_offset;\n};\n\n";
  o << "struct RingLayout {\n  std::size_t offset;\n  std::size_t size;\n"
       "  std::size_t capacity;\n  std::size_t slots_offset;\n  std::size_t slot_stride;\n"
       "  std::size_t slot_payload_offset;\n};\n\n";
  o << "struct BlockLayout {\n  std::size_t offset;\n  std::size_t size;\n"
       "  std::size_t length;\n};\n\n";

  o << "namespace cells {\n";
  for (const auto& c : plan.cells) {
    o << "inline constexpr CellLayout " << c.name << "{" << c.offset << ", " << c.size << ", "
      << c.payload_offset << "};  // " << c.record << '\n';
  }
  o << "}  // namespace cells\n\nnamespace rings {\n";
  for (const auto& r : plan.rings) {
    o << "inline constexpr RingLayout " << r.name << "{" << r.offset << ", " << r.size << ", "
      << r.capacity << ", " << r.slots_offset << ", " << r.slot_stride << ", "
      << r.slot_payload_offset << "};  // " << r.record << '\n';
  }
  o << "}  // namespace rings\n\nnamespace blocks {\n";
  for (const auto& b : plan.blocks) {
    o << "inline constexpr BlockLayout " << b.name << "{" << b.offset << ", " << b.size << ", "
      << b.length << "};  // " << scalar_name(b.type) << '\n';
  }
  o << "}  // namespace blocks\n\n}  // namespace lithe::gen\n";
  return o.str();
}

std::string emit_brain(const LayoutPlan& plan) {
  std::ostringstream o;
  o << "# Generated by `lithe codegen` from segment \"" << plan.segment_name << "\" v"
    << plan.version << ". Do not edit.\n";
  o << "\"\"\"Byte-offset bindings for the '" << plan.segment_name << "' shared segment.\"\"\"\n\n";
  o << "import struct\n\n";
  o << "SEGMENT_NAME = \"" << plan.segment_name << "\"\n";
  o << "SEGMENT_VERSION = " << plan.version << '\n';
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(plan.layout_hash));
    o << "LAYOUT_HASH = " << buf << '\n';
  }
  o << "HEADER_SIZE = " << plan.header_size << '\n';
  o << "TOTAL_SIZE = " << plan.total_size << '\n';
  o << "MAGIC = b\"LITH\"\n";
  o << "HEADER_FORMAT = \"<4sIQQ\"  # magic, version, layout_hash, total_size\n";

  for (const auto& rec : plan.records) {
    o << "\n\nclass " << rec.name << ":\n";
    o << "    SIZE = " << rec.size << '\n';
    o << "    FIELDS = (\n";
    for (const auto& f : rec.fields) {
      o << "        (\"" << f.name << "\", \"" << py_format(f.type) << "\", " << f.offset << "),\n";
    }
    o << "    )\n";
    o << "    __slots__ = (";
    for (const auto& f : rec.fields) {
      o << '"' << f.name << "\", ";
    }
    o << ")\n\n";
    o << "    def __init__(self";
    for (const auto& f : rec.fields) {
      o << ", " << f.name << '=' << (is_float(f.type) ? "0.0" : "0");
    }
    o << "):\n";
    for (const auto& f : rec.fields) {
      o << "        self." << f.name << " = " << f.name << '\n';
    }
    o << "\n    @classmethod\n    def unpack_from(cls, buf, offset=0):\n"
         "        return cls(*(struct.unpack_from(fmt, buf, offset + off)[0]"
         " for _, fmt, off in cls.FIELDS))\n\n";
    o << "    def pack_into(self, buf, offset=0):\n"
         "        for name, fmt, off in self.FIELDS:\n"
         "            struct.pack_into(fmt, buf, offset + off, getattr(self, name))\n\n";
    o << "    def __eq__(self, other):\n"
         "        return type(self) is type(other) and all(\n"
         "            getattr(self, n) == getattr(other, n) for n, _, _ in self.FIELDS)\n\n";
    o << "    def __repr__(self):\n"
         "        body = \", \".join(f\"{n}={getattr(self, n)!r}\" for n, _, _ in self.FIELDS)\n"
      << "        return f\"" << rec.name << "({body})\"\n";
  }

  o << "\n\nRECORDS = {\n";
  for (const auto& rec : plan.records) {
    o << "    \"" << rec.name << "\": " << rec.name << ",\n";
  }
  o << "}\n\nCELLS = {\n";
  for (const auto& c : plan.cells) {
    o << "    \"" << c.name << "\": {\"record\": \"" << c.record << "\", \"offset\": " << c.offset
      << ", \"size\": " << c.size << ", \"payload_offset\": " << c.payload_offset << "},\n";
  }
  o << "}\n\nRINGS = {\n";
  for (const auto& r : plan.rings) {
    o << "    \"" << r.name << "\": {\"record\": \"" << r.record << "\", \"offset\": " << r.offset
      << ", \"size\": " << r.size << ", \"capacity\": " << r.capacity
      << ", \"slots_offset\": " << r.slots_offset << ", \"slot_stride\": " << r.slot_stride
      << ", \"slot_payload_offset\": " << r.slot_payload_offset << "},\n";
  }
  o << "}\n\nBLOCKS = {\n";
  for (const auto& b : plan.blocks) {
    o << "    \"" << b.name << "\": {\"format\": \"" << py_format(b.type)
      << "\", \"offset\": " << b.offset << ", \"size\": " << b.size
      << ", \"length\": " << b.length << "},\n";
  }
  o << "}\n";
  return o.str();
}

}  // namespace

UnsupportedTarget::UnsupportedTarget(std::string_view name)
    : std::invalid_argument("unsupported binding target '" + std::string(name) +
                            "' (expected primary or brain)") {}

BindingTarget parse_target(std::string_view name) {
  if (name == "primary") {
    return BindingTarget::primary;
  }
  if (name == "brain") {
    return BindingTarget::brain;
  }
  throw UnsupportedTarget(name);
}

std::vector<BindingTarget> parse_target_list(std::string_view comma_separated) {
  std::vector<BindingTarget> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const std::size_t comma = comma_separated.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? comma_separated.size() : comma;
    out.push_back(parse_target(comma_separated.substr(start, end - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

std::string emit_bindings(const LayoutPlan& plan, BindingTarget target) {
  switch (target) {
    case BindingTarget::primary:
      return emit_primary(plan);
    case BindingTarget::brain:
      return emit_brain(plan);
  }
  throw UnsupportedTarget("?");
}

std::string emit_bindings(const LayoutPlan& plan, std::string_view target) {
  return emit_bindings(plan, parse_target(target));
}

std::string binding_file_name(const LayoutPlan& plan, BindingTarget target) {
  return plan.segment_name + (target == BindingTarget::primary ? "_layout.hpp" : "_layout.py");
}

std::vector<std::filesystem::path> write_bindings(const LayoutPlan& plan,
                                                  const std::vector<BindingTarget>& targets,
                                                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto target : targets) {
    const auto path = out_dir / binding_file_name(plan, target);
    const std::string content = emit_bindings(plan, target);
    std::string existing;
    if (std::ifstream in{path, std::ios::binary}) {
      std::ostringstream ss;
      ss << in.rdbuf();
      existing = ss.str();
    }
    if (existing != content) {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << content;
      if (!out) {
        throw std::system_error(errno, std::generic_category(), "writing " + path.string());
      }
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace lithe::schema
