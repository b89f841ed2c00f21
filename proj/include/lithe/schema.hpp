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
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lithe::schema {

enum class ScalarType : std::uint8_t { u8, u16, u32, u64, i32, i64, f32, f64 };

std::size_t scalar_size(ScalarType type) noexcept;
std::string_view scalar_name(ScalarType type) noexcept;
std::optional<ScalarType> parse_scalar(std::string_view name) noexcept;

struct FieldDef {
  std::string name;
  ScalarType type;
  std::string unit;  // free-form annotation, may be empty
};

struct RecordDef {
  std::string name;
  std::vector<FieldDef> fields;
};

struct CellDef {
  std::string name;
  std::string record;
};

struct RingDef {
  std::string name;
  std::string record;
  std::uint32_t capacity;
};

struct BlockDef {
  std::string name;
  ScalarType type;
  std::uint32_t length;
};

/// Declarative description of one shared segment, in declaration order.
struct SchemaDef {
  std::string segment_name = "lithe";
  std::uint32_t version = 1;
  std::vector<RecordDef> records;
  std::vector<CellDef> cells;
  std::vector<RingDef> rings;
  std::vector<BlockDef> blocks;

  const RecordDef* find_record(std::string_view name) const noexcept;
};

/// Raised for any malformed schema. Line and column are 1-based; both are 0
/// for errors that are not tied to a source position.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& what, std::size_t line, std::size_t column);

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

inline constexpr std::uint32_t kMinRingCapacity = 4;

/// Parses the line-oriented schema format:
///
///   segment <name> v<version>
///   record <Name> { <field>: <scalar> [unit], ... }
///   cell <name>: <Record> seqlock
///   ring <name>: <Record> capacity <n>
///   block <name>: <scalar>[<n>]
///
/// `#` starts a comment that runs to the end of the line.
SchemaDef parse_schema(std::string_view text);

SchemaDef load_schema_file(const std::filesystem::path& path);

}  // namespace lithe::schema
