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

#include "lithe/layout.hpp"

#include <algorithm>

namespace lithe::schema {

namespace {

template <class T>
const T* find_named(const std::vector<T>& items, std::string_view name) noexcept {
  for (const auto& item : items) {
    if (item.name == name) {
      return &item;
    }
  }
  return nullptr;
}

RecordLayout layout_record(const RecordDef& def) {
  RecordLayout rec{def.name, {}, 0, 1};
  std::size_t offset = 0;
  for (const auto& f : def.fields) {
    const std::size_t size = scalar_size(f.type);
    offset = round_up(offset, size);
    rec.fields.push_back({f.name, f.type, f.unit, offset, size});
    offset += size;
    rec.alignment = std::max(rec.alignment, size);
  }
  rec.size = round_up(offset, rec.alignment);
  return rec;
}

void append_line(std::string& out, std::string_view kind, std::string_view name,
                 std::size_t offset, std::size_t size) {
  if (!out.empty()) {
    out += '\n';
  }
  out += kind;
  out += ':';
  out += name;
  out += ':';
  out += std::to_string(offset);
  out += ':';
  out += std::to_string(size);
}

}  // namespace

const FieldLayout* RecordLayout::field(std::string_view field_name) const noexcept {
  return find_named(fields, field_name);
}

const RecordLayout* LayoutPlan::record(std::string_view name) const noexcept {
  return find_named(records, name);
}
const CellLayout* LayoutPlan::cell(std::string_view name) const noexcept {
  return find_named(cells, name);
}
const RingLayout* LayoutPlan::ring(std::string_view name) const noexcept {
  return find_named(rings, name);
}
const BlockLayout* LayoutPlan::block(std::string_view name) const noexcept {
  return find_named(blocks, name);
}

LayoutPlan compute_layout(const SchemaDef& def) {
  LayoutPlan plan;
  plan.segment_name = def.segment_name;
  plan.version = def.version;
  for (const auto& rec : def.records) {
    plan.records.push_back(layout_record(rec));
  }

  std::size_t offset = kHeaderSize;
  for (const auto& c : def.cells) {
    const RecordLayout* rec = plan.record(c.record);
    if (rec == nullptr) {
      throw SchemaError("cell '" + c.name + "' references unknown record '" + c.record + "'", 0, 0);
    }
    // Counter gets its own cache line so the writer's counter stores and the
    // payload never share a line with another entity.
    const std::size_t size = kCacheLine + round_up(rec->size, kCacheLine);
    plan.cells.push_back({c.name, c.record, offset, size, kCacheLine});
    offset += size;
  }
  for (const auto& r : def.rings) {
    const RecordLayout* rec = plan.record(r.record);
    if (rec == nullptr) {
      throw SchemaError("ring '" + r.name + "' references unknown record '" + r.record + "'", 0, 0);
    }
    if (r.capacity < kMinRingCapacity) {
      throw SchemaError("ring '" + r.name + "' capacity below minimum", 0, 0);
    }
    const std::size_t payload = round_up(kCounterSize, rec->alignment);
    const std::size_t stride = round_up(payload + rec->size, kCacheLine);
    const std::size_t size = kCacheLine + stride * r.capacity;
    plan.rings.push_back({r.name, r.record, r.capacity, offset, size, kCacheLine, stride, payload});
    offset += size;
  }
  for (const auto& b : def.blocks) {
    const std::size_t size = scalar_size(b.type) * b.length;
    plan.blocks.push_back({b.name, b.type, b.length, offset, size});
    offset += round_up(size, kCacheLine);
  }
  plan.total_size = offset;
  plan.layout_hash = layout_hash(plan);
  return plan;
}

std::string canonical_description(const LayoutPlan& plan) {
  std::string out;
  append_line(out, "segment", plan.segment_name, plan.version, plan.total_size);
  append_line(out, "header", plan.segment_name, 0, plan.header_size);
  for (const auto& rec : plan.records) {
    append_line(out, "record", rec.name, 0, rec.size);
    for (const auto& f : rec.fields) {
      append_line(out, scalar_name(f.type), rec.name + "." + f.name, f.offset, f.size);
    }
  }
  for (const auto& c : plan.cells) {
    append_line(out, "cell", c.name + "/" + c.record, c.offset, c.size);
  }
  for (const auto& r : plan.rings) {
    append_line(out, "ring", r.name + "/" + r.record, r.offset, r.size);
    append_line(out, "slots", r.name, r.offset + r.slots_offset, r.slot_stride);
  }
  for (const auto& b : plan.blocks) {
    append_line(out, "block", b.name + "/" + std::string(scalar_name(b.type)), b.offset, b.size);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = kFnvOffsetBasis;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t layout_hash(const LayoutPlan& plan) {
  return fnv1a64(canonical_description(plan));
}

}  // namespace lithe::schema
