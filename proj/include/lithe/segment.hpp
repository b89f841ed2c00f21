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
#include <stdexcept>
#include <string>

#include "lithe/layout.hpp"
#include "lithe/seqlock.hpp"
#include "lithe_layout.hpp"

namespace lithe {

inline constexpr char kSegmentMagic[4] = {'L', 'I', 'T', 'H'};

struct SegmentHeader {
  char magic[4];
  std::uint32_t version;
  std::uint64_t layout_hash;
  std::uint64_t total_size;
};
static_assert(sizeof(SegmentHeader) == 24);

/// What an attaching party expects to find in the header.
struct SegmentSpec {
  std::string name;
  std::uint32_t version = 0;
  std::uint64_t layout_hash = 0;
  std::size_t total_size = 0;

  static SegmentSpec generated();
  static SegmentSpec from_plan(const schema::LayoutPlan& plan);
};

class SegmentError : public std::runtime_error {
 public:
  enum class Kind {
    already_exists,
    not_found,
    os_error,
    size_mismatch,
    bad_magic,
    version_mismatch,
    hash_mismatch,
  };
  SegmentError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A mapped shared segment. Named segments live at `/lithe.<name>` in the
/// POSIX shared-memory namespace; anonymous ones are private mappings used
/// by single-process runs and tests.
class Segment {
 public:
  static Segment create(const SegmentSpec& spec, bool force = false);
  static Segment attach(const SegmentSpec& spec);
  static Segment anonymous(const SegmentSpec& spec);
  static std::string shm_path(const std::string& name);
  /// Removes a named segment; returns false if it did not exist.
  static bool unlink(const std::string& name);

  Segment(Segment&& other) noexcept;
  Segment& operator=(Segment&& other) noexcept;
  Segment(const Segment&) = delete;
  Segment& operator=(const Segment&) = delete;
  ~Segment();

  unsigned char* base() const noexcept { return base_; }
  std::size_t size() const noexcept { return size_; }
  const SegmentHeader& header() const noexcept {
    return *reinterpret_cast<const SegmentHeader*>(base_);
  }
  const std::string& name() const noexcept { return name_; }
  /// The creator unlinks the name on destruction unless released.
  void keep_on_close() noexcept { unlink_on_close_ = false; }

 private:
  Segment() = default;
  void reset() noexcept;

  unsigned char* base_ = nullptr;
  std::size_t size_ = 0;
  std::string name_;
  bool unlink_on_close_ = false;
};

class WaypointRing;

/// Typed views over the generated default layout.
struct SegmentViews {
  SeqlockCell<gen::RobotState> state;
  SeqlockCell<gen::ActuatorCommand> command;
  unsigned char* ring_base = nullptr;
  double* persistent = nullptr;

  static SegmentViews over(unsigned char* base) noexcept;
};

}  // namespace lithe
