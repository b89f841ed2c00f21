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

#include <gtest/gtest.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <thread>

#include "lithe/segment.hpp"
#include "lithe/seqlock.hpp"
#include "lithe/spsc_queue.hpp"
#include "lithe/waypoint_ring.hpp"
#include "test_util.hpp"

using namespace lithe;

namespace {

std::string unique_name(const std::string& tag) {
  return "test_" + tag + "_" + std::to_string(::getpid());
}

SegmentSpec spec_named(const std::string& tag) {
  SegmentSpec s = SegmentSpec::generated();
  s.name = unique_name(tag);
  return s;
}

// 48-byte record whose last word is a checksum of the first five.
struct Checked {
  std::uint64_t w[5];
  std::uint64_t sum;
};
static_assert(sizeof(Checked) == 48);

std::uint64_t mix(const Checked& c) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (const auto v : c.w) {
    h = (h ^ v) * 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return h;
}

Checked make_checked(std::uint64_t i) {
  Checked c{};
  for (int k = 0; k < 5; ++k) {
    c.w[k] = i * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(k);
  }
  c.sum = mix(c);
  return c;
}

struct alignas(64) CellMemory {
  std::uint64_t counter[8] = {};
  std::uint64_t payload[8] = {};
};

struct LocalRing {
  std::vector<unsigned char> mem;
  WaypointRing ring;
  LocalRing() : mem(gen::rings::waypoints.size + 64, 0) {
    auto* base = mem.data() + (64 - reinterpret_cast<std::uintptr_t>(mem.data()) % 64) % 64;
    ring = WaypointRing(base, RingGeometry::generated());
  }
};

}  // namespace

TEST(Segment, CreateThenAttachSeesZeroedCells) {
  const SegmentSpec spec = spec_named("attach");
  Segment a = Segment::create(spec, true);
  Segment b = Segment::attach(spec);
  EXPECT_EQ(b.header().layout_hash, gen::kLayoutHash);
  const SegmentViews v = SegmentViews::over(b.base());
  const auto st = v.state.read();
  EXPECT_TRUE(st.ok);
  EXPECT_EQ(st.seq, 0u);
  EXPECT_EQ(st.value.position, 0.0);
  EXPECT_EQ(st.value.cycle, 0u);
  EXPECT_EQ(v.command.read().value.torque, 0.0);
  // A write through one mapping is visible through the other.
  SegmentViews::over(a.base()).command.write({1.25, 0});
  EXPECT_EQ(v.command.read().value.torque, 1.25);
}

TEST(Segment, AttachRejectsDifferentHash) {
  SegmentSpec spec = spec_named("hash");
  Segment a = Segment::create(spec, true);
  spec.layout_hash ^= 1;
  try {
    Segment::attach(spec);
    FAIL() << "attach accepted a foreign layout hash";
  } catch (const SegmentError& e) {
    EXPECT_EQ(e.kind(), SegmentError::Kind::hash_mismatch);
  }
}

TEST(Segment, AttachMissingAndVersionMismatch) {
  SegmentSpec spec = spec_named("missing");
  Segment::unlink(spec.name);
  try {
    Segment::attach(spec);
    FAIL();
  } catch (const SegmentError& e) {
    EXPECT_EQ(e.kind(), SegmentError::Kind::not_found);
  }
  Segment a = Segment::create(spec, true);
  spec.version += 1;
  try {
    Segment::attach(spec);
    FAIL();
  } catch (const SegmentError& e) {
    EXPECT_EQ(e.kind(), SegmentError::Kind::version_mismatch);
  }
}

TEST(Segment, CreateExistingNeedsForceAndForceZeroes) {
  const SegmentSpec spec = spec_named("force");
  {
    Segment a = Segment::create(spec, true);
    a.keep_on_close();
    std::memset(a.base() + 64, 0xAB, a.size() - 64);  // leftovers of a crashed writer
  }
  try {
    Segment::create(spec, false);
    FAIL() << "create over an existing segment succeeded without force";
  } catch (const SegmentError& e) {
    EXPECT_EQ(e.kind(), SegmentError::Kind::already_exists);
  }
  Segment b = Segment::create(spec, true);
  for (std::size_t i = 64; i < b.size(); ++i) {
    ASSERT_EQ(b.base()[i], 0) << "byte " << i;
  }
}

TEST(Segment, PythonBindingReadsHeaderAndState) {
  const SegmentSpec spec = spec_named("py");
  Segment seg = Segment::create(spec, true);
  SegmentViews::over(seg.base()).state.write({0.5, -1.5, 2.0, 42, 7});
  const auto dir = lithe_test::work_dir("py_attach");
  std::ofstream(dir / "attach.py") << "import mmap, struct, sys\n"
                                   << "sys.path.insert(0, '" << LITHE_TEST_GENERATED_DIR << "')\n"
                                   << "import lithe_layout as L\n"
                                   << "f = open('/dev/shm" << Segment::shm_path(spec.name) << "', 'r+b')\n"
                                   << R"(m = mmap.mmap(f.fileno(), L.TOTAL_SIZE)
magic, version, h, total = struct.unpack_from(L.HEADER_FORMAT, m, 0)
assert magic == L.MAGIC and h == L.LAYOUT_HASH and total == L.TOTAL_SIZE, (magic, h)
cell = L.CELLS["state"]
seq = struct.unpack_from("<Q", m, cell["offset"])[0]
s = L.RobotState.unpack_from(m, cell["offset"] + cell["payload_offset"])
print(seq, s.position, s.velocity, s.cycle, s.fault_flags)
)";
  EXPECT_EQ(lithe_test::capture("python3 " + (dir / "attach.py").string() + " 2>&1"),
            "2 0.5 -1.5 42 7\n");
}

TEST(Seqlock, UncontendedWriteAdvancesByTwo) {
  CellMemory m;
  SeqlockCell<gen::ActuatorCommand> cell(m.counter, m.payload);
  cell.write({1.0, 0});
  auto r = cell.read();
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.value.torque, 1.0);
  EXPECT_EQ(cell.sequence(), 2u);
  EXPECT_EQ(r.retries, 0u);
  cell.write({2.0, 1});
  r = cell.read();
  EXPECT_EQ(cell.sequence(), 4u);
  EXPECT_EQ(r.value.torque, 2.0);
  EXPECT_EQ(r.value.mode, 1u);
}

TEST(Seqlock, OddCounterExhaustsRetries) {
  CellMemory m;
  SeqlockCell<gen::ActuatorCommand> cell(m.counter, m.payload);
  cell.write({1.0, 0});
  cell.begin_write_for_test();
  const auto r = cell.read(16);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.retries, 16u);
  cell.end_write_for_test();
  EXPECT_TRUE(cell.read().ok);
}

TEST(Seqlock, ConcurrentStressNeverReturnsTornRecord) {
  CellMemory m;
  alignas(64) std::uint64_t payload[8] = {};
  SeqlockCell<Checked> cell(m.counter, payload);
  cell.write(make_checked(0));
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    for (std::uint64_t i = 1; !stop.load(std::memory_order_relaxed); ++i) {
      cell.write(make_checked(i));
    }
  });
  std::uint64_t ok = 0, bad = 0, exhausted = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const auto r = cell.read();
    if (!r.ok) {
      ++exhausted;
      continue;
    }
    ++ok;
    if (mix(r.value) != r.value.sum) {
      ++bad;
    }
  }
  stop = true;
  writer.join();
  EXPECT_EQ(bad, 0u);
  EXPECT_GT(ok, 0u);
  RecordProperty("exhausted", static_cast<int>(exhausted));
}

TEST(Ring, PublishThreeWaypoints) {
  LocalRing r;
  for (double t : {0.0, 0.1, 0.2}) {
    EXPECT_EQ(r.ring.publish({t, t * 2}), WaypointRing::PublishResult::ok);
  }
  EXPECT_EQ(r.ring.head(), 3u);
  for (std::uint64_t i = 0; i < 3; ++i) {
    Waypoint w{};
    ASSERT_TRUE(r.ring.read(i, w));
    EXPECT_DOUBLE_EQ(w.t, 0.1 * static_cast<double>(i));
  }
}

TEST(Ring, RejectsNonMonotoneAndNonFinite) {
  LocalRing r;
  EXPECT_EQ(r.ring.publish({0.2, 0}), WaypointRing::PublishResult::ok);
  EXPECT_EQ(r.ring.publish({0.2, 1}), WaypointRing::PublishResult::non_monotone);
  EXPECT_EQ(r.ring.publish({0.1, 1}), WaypointRing::PublishResult::non_monotone);
  EXPECT_EQ(r.ring.publish({std::nan(""), 1}), WaypointRing::PublishResult::non_finite);
  EXPECT_EQ(r.ring.publish({0.3, INFINITY}), WaypointRing::PublishResult::non_finite);
  EXPECT_EQ(r.ring.head(), 1u);
}

TEST(Ring, OverwritesOldestPastCapacity) {
  LocalRing r;
  const std::size_t cap = r.ring.capacity();
  for (std::size_t i = 0; i < cap + 3; ++i) {
    r.ring.publish({static_cast<double>(i), 0});
  }
  EXPECT_EQ(r.ring.head(), cap + 3);
  Waypoint w{};
  for (std::uint64_t i = 0; i < 3; ++i) {
    EXPECT_FALSE(r.ring.read(i, w)) << i;
  }
  for (std::uint64_t i = 3; i < cap + 3; ++i) {
    ASSERT_TRUE(r.ring.read(i, w));
    EXPECT_EQ(w.t, static_cast<double>(i));
  }
}

TEST(Ring, BracketSimpleCases) {
  LocalRing r;
  EXPECT_EQ(r.ring.bracket(0.5).kind, Bracket::Kind::no_data);
  for (int i = 0; i < 4; ++i) {
    r.ring.publish({static_cast<double>(i), static_cast<double>(10 * i)});
  }
  const Bracket b = r.ring.bracket(1.5);
  ASSERT_EQ(b.kind, Bracket::Kind::interpolate);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(b.points[static_cast<std::size_t>(i)].t, static_cast<double>(i));
    EXPECT_EQ(b.index[static_cast<std::size_t>(i)], i);
  }
  const Bracket late = r.ring.bracket(9.0);
  EXPECT_EQ(late.kind, Bracket::Kind::hold_last);
  EXPECT_EQ(late.newest.t, 3.0);
}

TEST(Ring, BracketMatchesMirroredReference) {
  LocalRing r;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> step(0.001, 0.05);
  std::vector<Waypoint> mirror;
  double t = 0.0;
  for (int i = 0; i < 70; ++i) {
    t += step(rng);
    mirror.push_back({t, std::sin(t)});
    r.ring.publish(mirror.back());
  }
  const std::size_t cap = r.ring.capacity();
  const std::size_t oldest = mirror.size() - cap;
  std::uniform_real_distribution<double> q(mirror[oldest + 1].t, mirror.back().t);
  for (int i = 0; i < 2000; ++i) {
    const double tq = q(rng);
    const Bracket b = r.ring.bracket(tq);
    ASSERT_EQ(b.kind, Bracket::Kind::interpolate);
    // Brute force: last retained waypoint with t <= tq.
    std::size_t k = oldest;
    for (std::size_t j = oldest; j < mirror.size(); ++j) {
      if (mirror[j].t <= tq) {
        k = j;
      }
    }
    if (k == mirror.size() - 1) {
      k -= 1;
    }
    ASSERT_EQ(b.index[1], static_cast<std::int64_t>(k));
    ASSERT_EQ(b.index[2], static_cast<std::int64_t>(k + 1));
    for (std::size_t s = 0; s < 4; ++s) {
      if (b.index[s] < 0) {
        continue;
      }
      const auto idx = static_cast<std::size_t>(b.index[s]);
      EXPECT_EQ(b.points[s].t, mirror[idx].t);
      EXPECT_EQ(WaypointRing::slot_of(idx, cap), idx % cap);
    }
  }
}

TEST(SpscQueue, FifoAcrossThreads) {
  SpscQueue<std::uint64_t> q(1024);
  constexpr std::uint64_t kN = 500000;
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < kN;) {
      if (q.push(i)) {
        ++i;
      } else {
        std::this_thread::yield();
      }
    }
  });
  std::uint64_t expect = 0, v = 0;
  while (expect < kN) {
    if (q.pop(v)) {
      ASSERT_EQ(v, expect);
      ++expect;
    } else {
      std::this_thread::yield();
    }
  }
  producer.join();
}

TEST(SpscQueue, FullQueueRejects) {
  SpscQueue<int> q(4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(q.push(i));
  }
  EXPECT_FALSE(q.push(9));
  int v;
  EXPECT_TRUE(q.pop(v));
  EXPECT_EQ(v, 0);
  EXPECT_TRUE(q.push(9));
}
