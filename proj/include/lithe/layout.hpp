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
#include <string>
#include <string_view>
#include <vector>

#include "lithe/schema.hpp"

namespace lithe::schema {

inline constexpr std::size_t kCacheLine = 64;
inline constexpr std::size_t kHeaderSize = 64;
inline constexpr std::size_t kCounterSize = 8;

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::size_t round_up(std::size_t value, std::size_t align) noexcept {
  return (value + align - 1) / align * align;
}

struct FieldLayout {
  std::string name;
  ScalarType type;
  std::string unit;
  std::size_t offset;
  std::size_t size;
};

struct RecordLayout {
  std::string name;
  std::vector<FieldLayout> fields;
  std::size_t size;
  std::size_t alignment;

  const FieldLayout* field(std::string_view field_name) const noexcept;
};

// Offsets of cells, rings and blocks are absolute within the segment; the
// payload / slot offsets below are relative to the entity (or slot) start.

struct CellLayout {
  std::string name;
  std::string record;
  std::size_t offset;
  std::size_t size;
  std::size_t payload_offset;  // counter lives at relative offset 0
};

struct RingLayout {
  std::string name;
  std::string record;
  std::uint32_t capacity;
  std::size_t offset;
  std::size_t size;
  std::size_t slots_offset;         // head counter lives at relative offset 0
  std::size_t slot_stride;
  std::size_t slot_payload_offset;  // slot counter lives at slot offset 0
};

struct BlockLayout {
  std::string name;
  ScalarType type;
  std::uint32_t length;
  std::size_t offset;
  std::size_t size;
};

struct LayoutPlan {
  std::string segment_name;
  std::uint32_t version = 0;
  std::size_t header_size = kHeaderSize;
  std::vector<RecordLayout> records;
  std::vector<CellLayout> cells;
  std::vector<RingLayout> rings;
  std::vector<BlockLayout> blocks;
  std::size_t total_size = 0;
  std::uint64_t layout_hash = 0;

  const RecordLayout* record(std::string_view name) const noexcept;
  const CellLayout* cell(std::string_view name) const noexcept;
  const RingLayout* ring(std::string_view name) const noexcept;
  const BlockLayout* block(std::string_view name) const noexcept;
};

/// Places every field at the next offset rounded up to its natural alignment
/// (declaration order, no reordering) and lays out the segment as
/// header | cells | rings | blocks, each entity on a 64-byte boundary. The
/// returned plan carries its layout_hash.
LayoutPlan compute_layout(const SchemaDef& def);

/// One `kind:name:offset:size` line per entity and field, in layout order.
std::string canonical_description(const LayoutPlan& plan);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// FNV-1a 64 over canonical_description(plan).
std::uint64_t layout_hash(const LayoutPlan& plan);

}  // namespace lithe::schema
