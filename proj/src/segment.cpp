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

#include "lithe/segment.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <utility>

namespace lithe {

namespace {

std::uint32_t magic_word() noexcept {
  std::uint32_t w;
  std::memcpy(&w, kSegmentMagic, sizeof w);
  return w;
}

std::string os_message(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void write_header(unsigned char* base, const SegmentSpec& spec) noexcept {
  auto* h = reinterpret_cast<SegmentHeader*>(base);
  h->version = spec.version;
  h->layout_hash = spec.layout_hash;
  h->total_size = spec.total_size;
  std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(h->magic))
      .store(magic_word(), std::memory_order_release);
}

}  // namespace

SegmentSpec SegmentSpec::generated() {
  return {gen::kSegmentName, gen::kSegmentVersion, gen::kLayoutHash, gen::kTotalSize};
}

SegmentSpec SegmentSpec::from_plan(const schema::LayoutPlan& plan) {
  return {plan.segment_name, plan.version, plan.layout_hash, plan.total_size};
}

std::string Segment::shm_path(const std::string& name) {
  return "/lithe." + name;
}

bool Segment::unlink(const std::string& name) {
  return ::shm_unlink(shm_path(name).c_str()) == 0;
}

Segment Segment::create(const SegmentSpec& spec, bool force) {
  if (spec.total_size < schema::kHeaderSize) {
    throw SegmentError(SegmentError::Kind::size_mismatch, "segment smaller than its header");
  }
  const std::string path = shm_path(spec.name);
  if (force) {
    ::shm_unlink(path.c_str());
  }
  const int fd = ::shm_open(path.c_str(), O_RDWR | O_CREAT | O_EXCL, 0600);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw SegmentError(SegmentError::Kind::already_exists, path + " already exists");
    }
    throw SegmentError(SegmentError::Kind::os_error, os_message("shm_open " + path));
  }
  if (::ftruncate(fd, static_cast<off_t>(spec.total_size)) != 0) {
    const std::string msg = os_message("ftruncate " + path);
    ::close(fd);
    ::shm_unlink(path.c_str());
    throw SegmentError(SegmentError::Kind::os_error, msg);
  }
  void* p = ::mmap(nullptr, spec.total_size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  ::close(fd);
  if (p == MAP_FAILED) {
    const std::string msg = os_message("mmap " + path);
    ::shm_unlink(path.c_str());
    throw SegmentError(SegmentError::Kind::os_error, msg);
  }
  Segment seg;
  seg.base_ = static_cast<unsigned char*>(p);
  seg.size_ = spec.total_size;
  seg.name_ = spec.name;
  seg.unlink_on_close_ = true;
  // ftruncate zero-fills; the header goes in last so attachers never see a
  // valid magic over a partially initialised segment.
  write_header(seg.base_, spec);
  return seg;
}

Segment Segment::attach(const SegmentSpec& spec) {
  const std::string path = shm_path(spec.name);
  const int fd = ::shm_open(path.c_str(), O_RDWR, 0);
  if (fd < 0) {
    if (errno == ENOENT) {
      throw SegmentError(SegmentError::Kind::not_found, path + " does not exist");
    }
    throw SegmentError(SegmentError::Kind::os_error, os_message("shm_open " + path));
  }
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    const std::string msg = os_message("fstat " + path);
    ::close(fd);
    throw SegmentError(SegmentError::Kind::os_error, msg);
  }
  if (static_cast<std::size_t>(st.st_size) != spec.total_size) {
    ::close(fd);
    throw SegmentError(SegmentError::Kind::size_mismatch,
                       path + " has size " + std::to_string(st.st_size) + ", expected " +
                           std::to_string(spec.total_size));
  }
  void* p = ::mmap(nullptr, spec.total_size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  ::close(fd);
  if (p == MAP_FAILED) {
    throw SegmentError(SegmentError::Kind::os_error, os_message("mmap " + path));
  }
  Segment seg;
  seg.base_ = static_cast<unsigned char*>(p);
  seg.size_ = spec.total_size;
  seg.name_ = spec.name;

  const auto& h = seg.header();
  const std::uint32_t magic =
      std::atomic_ref<const std::uint32_t>(*reinterpret_cast<const std::uint32_t*>(h.magic))
          .load(std::memory_order_acquire);
  if (magic != magic_word()) {
    throw SegmentError(SegmentError::Kind::bad_magic, path + " has no valid header");
  }
  if (h.version != spec.version) {
    throw SegmentError(SegmentError::Kind::version_mismatch,
                       path + " version " + std::to_string(h.version) + ", expected " +
                           std::to_string(spec.version));
  }
  if (h.layout_hash != spec.layout_hash) {
    throw SegmentError(SegmentError::Kind::hash_mismatch, path + " layout hash differs");
  }
  if (h.total_size != spec.total_size) {
    throw SegmentError(SegmentError::Kind::size_mismatch, path + " header size differs");
  }
  return seg;
}

Segment Segment::anonymous(const SegmentSpec& spec) {
  void* p = ::mmap(nullptr, spec.total_size, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS,
                   -1, 0);
  if (p == MAP_FAILED) {
    throw SegmentError(SegmentError::Kind::os_error, os_message("mmap anonymous"));
  }
  Segment seg;
  seg.base_ = static_cast<unsigned char*>(p);
  seg.size_ = spec.total_size;
  seg.name_ = spec.name;
  write_header(seg.base_, spec);
  return seg;
}

Segment::Segment(Segment&& other) noexcept
    : base_(std::exchange(other.base_, nullptr)),
      size_(std::exchange(other.size_, 0)),
      name_(std::move(other.name_)),
      unlink_on_close_(std::exchange(other.unlink_on_close_, false)) {}

Segment& Segment::operator=(Segment&& other) noexcept {
  if (this != &other) {
    reset();
    base_ = std::exchange(other.base_, nullptr);
    size_ = std::exchange(other.size_, 0);
    name_ = std::move(other.name_);
    unlink_on_close_ = std::exchange(other.unlink_on_close_, false);
  }
  return *this;
}

Segment::~Segment() { reset(); }

void Segment::reset() noexcept {
  if (base_ != nullptr) {
    ::munmap(base_, size_);
    if (unlink_on_close_) {
      ::shm_unlink(shm_path(name_).c_str());
    }
  }
  base_ = nullptr;
  size_ = 0;
  unlink_on_close_ = false;
}

SegmentViews SegmentViews::over(unsigned char* base) noexcept {
  SegmentViews v;
  const auto& s = gen::cells::state;
  const auto& c = gen::cells::command;
  v.state = SeqlockCell<gen::RobotState>(base + s.offset, base + s.offset + s.payload_offset);
  v.command = SeqlockCell<gen::ActuatorCommand>(base + c.offset, base + c.offset + c.payload_offset);
  v.ring_base = base + gen::rings::waypoints.offset;
  v.persistent = reinterpret_cast<double*>(base + gen::blocks::persistent.offset);
  return v;
}

}  // namespace lithe
