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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "lithe/command_shaping.hpp"
#include "lithe/plant.hpp"
#include "lithe/safety.hpp"
#include "lithe/waypoint_ring.hpp"

using namespace lithe;

namespace {

struct LocalRing {
  std::vector<unsigned char> mem;
  WaypointRing ring;
  LocalRing() : mem(gen::rings::waypoints.size + 64, 0) {
    auto* base = mem.data() + (64 - reinterpret_cast<std::uintptr_t>(mem.data()) % 64) % 64;
    ring = WaypointRing(base, RingGeometry::generated());
  }
};

SplineSample cr(const std::array<Waypoint, 4>& p, double t) {
  SplineSample s{};
  EXPECT_TRUE(catmull_rom(p[0], p[1], p[2], p[3], t, s)) << "t=" << t;
  return s;
}

// Cubic through the Hermite data written out as a monomial polynomial in t,
// evaluated directly.
double oracle_position(const std::array<Waypoint, 4>& p, double t) {
  const double h = p[2].t - p[1].t;
  const double m1 = (p[2].position - p[0].position) / (p[2].t - p[0].t);
  const double m2 = (p[3].position - p[1].position) / (p[3].t - p[1].t);
  // x(t) = a + b u + c u^2 + d u^3 with u = t - p1.t
  const double a = p[1].position;
  const double b = m1;
  const double dx = p[2].position - p[1].position;
  const double c = (3 * dx / h - 2 * m1 - m2) / h;
  const double d = (m1 + m2 - 2 * dx / h) / (h * h);
  const double u = t - p[1].t;
  return a + u * (b + u * (c + u * d));
}

}  // namespace

TEST(CatmullRom, EndpointsInterpolateExactly) {
  const std::array<Waypoint, 4> p{{{0.0, 0.3}, {0.7, -1.1}, {1.3, 2.5}, {2.9, 0.4}}};
  EXPECT_EQ(cr(p, 0.7).position, -1.1);
  EXPECT_NEAR(cr(p, 1.3).position, 2.5, 1e-12);
}

TEST(CatmullRom, ConstantData) {
  const std::array<Waypoint, 4> p{{{0, 4.2}, {1, 4.2}, {2, 4.2}, {3, 4.2}}};
  for (double t = 1.0; t <= 2.0; t += 0.125) {
    const auto s = cr(p, t);
    EXPECT_NEAR(s.position, 4.2, 1e-12);
    EXPECT_NEAR(s.velocity, 0.0, 1e-12);
  }
}

TEST(CatmullRom, CollinearMidpoint) {
  const std::array<Waypoint, 4> p{{{0, 0}, {1, 1}, {2, 2}, {3, 3}}};
  const auto s = cr(p, 1.5);
  EXPECT_NEAR(s.position, 1.5, 1e-12);
  EXPECT_NEAR(s.velocity, 1.0, 1e-12);
  EXPECT_NEAR(oracle_position(p, 1.5), 1.5, 1e-12);
}

TEST(CatmullRom, LinearPrecisionOnIrregularKnots) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.01, 0.2), coef(-5, 5), frac(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = coef(rng), b = coef(rng);
    std::array<Waypoint, 4> p{};
    double t = coef(rng);
    for (auto& w : p) {
      t += gap(rng);
      w = {t, a + b * t};
    }
    for (int i = 0; i <= 20; ++i) {
      const double tq = p[1].t + (p[2].t - p[1].t) * i / 20.0;
      const auto s = cr(p, tq);
      ASSERT_NEAR(s.position, a + b * tq, 1e-12);
      ASSERT_NEAR(s.velocity, b, 1e-9);
    }
  }
}

TEST(CatmullRom, MatchesIndependentPolynomial) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> gap(0.005, 0.3), val(-2, 2), frac(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<Waypoint, 4> p{};
    double t = 0;
    for (auto& w : p) {
      t += gap(rng);
      w = {t, val(rng)};
    }
    const double tq = p[1].t + (p[2].t - p[1].t) * frac(rng);
    ASSERT_NEAR(cr(p, tq).position, oracle_position(p, tq), 1e-12);
  }
}

TEST(CatmullRom, C1AtInteriorKnots) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> gap(0.01, 0.2), val(-1, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Waypoint> k(6);
    double t = 0;
    for (auto& w : k) {
      t += gap(rng);
      w = {t, val(rng)};
    }
    // Knot k[2] joins segment [k1,k2] (window 0..3) and [k2,k3] (window 1..4).
    const double tk = k[2].t;
    const std::array<Waypoint, 4> left{k[0], k[1], k[2], k[3]};
    const std::array<Waypoint, 4> right{k[1], k[2], k[3], k[4]};
    const double vl = cr(left, tk).velocity, vr = cr(right, tk).velocity;
    EXPECT_NEAR(vl, vr, 1e-9 * std::max(1.0, std::abs(vl)));
  }
}

TEST(CatmullRom, VelocityIsDerivativeOfPosition) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> gap(0.05, 0.2), val(-1, 1), frac(0.05, 0.95);
  for (int trial = 0; trial < 300; ++trial) {
    std::array<Waypoint, 4> p{};
    double t = 0;
    for (auto& w : p) {
      t += gap(rng);
      w = {t, val(rng)};
    }
    const double tq = p[1].t + (p[2].t - p[1].t) * frac(rng);
    constexpr double h = 1e-6;
    const double numeric = (cr(p, tq + h).position - cr(p, tq - h).position) / (2 * h);
    const double v = cr(p, tq).velocity;
    ASSERT_NEAR(numeric, v, 1e-6 * std::max(1.0, std::abs(v)));
  }
}

TEST(CatmullRom, RejectsBadKnots) {
  SplineSample s{};
  EXPECT_FALSE(catmull_rom({0, 0}, {1, 0}, {1, 1}, {2, 0}, 1.0, s));
  EXPECT_FALSE(catmull_rom({0, 0}, {1, 0}, {2, 1}, {3, 0}, 2.5, s));
  EXPECT_FALSE(catmull_rom({2, 0}, {1, 0}, {2.5, 1}, {3, 0}, 1.5, s));
}

TEST(SampleSetpoint, EmptyRingIsNoData) {
  LocalRing r;
  const auto s = sample_setpoint(r.ring, 1.0);
  EXPECT_EQ(s.source, SetpointSample::Source::no_data);
  EXPECT_EQ(s.position, 0.0);
  EXPECT_EQ(s.velocity_ff, 0.0);
}

TEST(SampleSetpoint, LiveTrajectoryInterpolates) {
  LocalRing r;
  for (int i = 0; i < 40; ++i) {
    const double t = 0.01 * i;
    r.ring.publish({t, std::sin(t)});
  }
  const auto s = sample_setpoint(r.ring, 0.2055);
  EXPECT_EQ(s.source, SetpointSample::Source::interpolated);
  EXPECT_FALSE(s.stale);
  EXPECT_NEAR(s.position, std::sin(0.2055), 1e-6);
  EXPECT_NEAR(s.velocity_ff, std::cos(0.2055), 1e-3);
}

TEST(SampleSetpoint, FrozenBrainHoldsLast) {
  LocalRing r;
  for (int i = 0; i < 40; ++i) {
    r.ring.publish({0.01 * i, 0.5 + 0.01 * i});
  }
  const double last_t = 0.39, last_x = 0.5 + 0.39;
  for (double dt : {0.1, 0.3, 1.5}) {
    const auto s = sample_setpoint(r.ring, last_t + dt, 0.25);
    EXPECT_EQ(s.source, SetpointSample::Source::hold_last) << dt;
    EXPECT_DOUBLE_EQ(s.position, last_x);
    EXPECT_EQ(s.velocity_ff, 0.0);
    EXPECT_EQ(s.stale, dt > 0.25) << dt;
  }
}

TEST(SampleSetpoint, FewerThanFourPointsIsStaleHold) {
  LocalRing r;
  r.ring.publish({0.0, 1.0});
  r.ring.publish({0.1, 2.0});
  const auto s = sample_setpoint(r.ring, 0.05);
  EXPECT_TRUE(s.stale);
  EXPECT_EQ(s.position, 2.0);
  EXPECT_EQ(s.velocity_ff, 0.0);
}

TEST(Safety, TruthTable) {
  const SafetyLimits lim{3.0, 10.0};
  auto run = [&](double tau, double vel) {
    gen::RobotState st{};
    st.velocity = vel;
    return apply_safety({tau, 0}, st, lim);
  };
  auto nan = run(std::numeric_limits<double>::quiet_NaN(), 0);
  EXPECT_EQ(nan.command.torque, 0.0);
  EXPECT_EQ(nan.command.mode, 1u);
  EXPECT_TRUE(nan.events & kSafetyNonFinite);
  EXPECT_EQ(run(INFINITY, 0).command.torque, 0.0);
  EXPECT_EQ(run(-5, 0).command.torque, -3.0);
  EXPECT_TRUE(run(-5, 0).events & kSafetyClamped);
  EXPECT_EQ(run(5, 0).command.torque, 3.0);
  EXPECT_EQ(run(1.5, 0).command.torque, 1.5);
  EXPECT_EQ(run(1.5, 0).events, kSafetyNone);
  // Overspeed: only braking torque passes.
  EXPECT_EQ(run(1.0, 12).command.torque, 0.0);
  EXPECT_TRUE(run(1.0, 12).events & kSafetyVelocityLimited);
  EXPECT_EQ(run(-1.0, 12).command.torque, -1.0);
  EXPECT_EQ(run(-1.0, -12).command.torque, 0.0);
  EXPECT_EQ(run(1.0, -12).command.torque, 1.0);
  EXPECT_EQ(run(-7.0, 12).command.torque, -3.0);
  EXPECT_EQ(run(1.0, 10).command.torque, 1.0);
}

TEST(Safety, OutputAlwaysWithinLimits) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> tau(-100, 100), vel(-30, 30);
  const SafetyLimits lim{2.5, 8.0};
  for (int i = 0; i < 100000; ++i) {
    gen::RobotState st{};
    st.velocity = vel(rng);
    const auto out = apply_safety({tau(rng), 0}, st, lim);
    ASSERT_LE(std::abs(out.command.torque), 2.5);
    if (std::abs(st.velocity) > 8.0) {
      ASSERT_LE(out.command.torque * st.velocity, 0.0);
    }
  }
}

TEST(Plant, EquilibriumHolds) {
  const PlantParams p;
  PlantState s{M_PI / 6, 0.0, 0.0};
  const double tau = p.mgl * std::sin(M_PI / 6);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_TRUE(step_plant(p, s, tau, p.substep));
    ASSERT_NEAR(s.theta, M_PI / 6, 1e-12);
    ASSERT_NEAR(s.omega, 0.0, 1e-12);
  }
}

TEST(Plant, SmallAnglePeriod) {
  PlantParams p;
  p.damping = 0.0;
  PlantState s{0.05, 0.0, 0.0};
  // Downward zero crossings of theta.
  std::vector<double> crossings;
  double prev = s.theta;
  while (crossings.size() < 4 && s.time < 5.0) {
    ASSERT_TRUE(step_plant(p, s, 0.0, p.substep));
    if (prev > 0 && s.theta <= 0) {
      crossings.push_back(s.time - p.substep * s.theta / (s.theta - prev));
    }
    prev = s.theta;
  }
  ASSERT_EQ(crossings.size(), 4u);
  const double period = (crossings[3] - crossings[0]) / 3.0;
  const double oracle = 2 * M_PI * std::sqrt(p.inertia / p.mgl);
  EXPECT_NEAR(oracle, 0.811, 1e-3);
  EXPECT_NEAR(period, oracle, 0.02 * oracle);
}

TEST(Plant, SettlesToClosedFormSteadyState) {
  const PlantParams p;
  PlantState s;
  ASSERT_TRUE(integrate_plant(p, s, 0.6, 10.0));
  EXPECT_NEAR(s.time, 10.0, 1e-9);
  EXPECT_NEAR(s.theta, std::asin(0.6 / 1.2), 1e-3);
}

TEST(Plant, GravityPullsDown) {
  const PlantParams p;
  PlantState s{M_PI / 2, 0.0, 0.0};
  double prev = s.theta;
  for (int i = 0; i < 20; ++i) {
    ASSERT_TRUE(integrate_plant(p, s, 0.0, 0.001));
    EXPECT_LT(s.theta, prev);
    prev = s.theta;
  }
}

TEST(Plant, EnergyNonIncreasingWithDamping) {
  const PlantParams p;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(-3, 3), om(-5, 5);
  for (int trial = 0; trial < 20; ++trial) {
    PlantState s{th(rng), om(rng), 0.0};
    double e = plant_energy(p, s);
    for (int i = 0; i < 20000; ++i) {
      ASSERT_TRUE(step_plant(p, s, 0.0, p.substep));
      const double e2 = plant_energy(p, s);
      ASSERT_LE(e2, e + 1e-9) << "trial " << trial << " step " << i;
      e = e2;
    }
  }
}

TEST(Plant, TorqueSaturates) {
  const PlantParams p;
  PlantState a, b;
  integrate_plant(p, a, 50.0, 0.01);
  integrate_plant(p, b, p.torque_limit, 0.01);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.omega, b.omega);
}

TEST(Plant, RejectsBadInput) {
  const PlantParams p;
  PlantState s{0.1, 0.2, 0.0};
  const PlantState before = s;
  EXPECT_FALSE(step_plant(p, s, std::nan(""), p.substep));
  EXPECT_FALSE(step_plant(p, s, 0.0, 0.0));
  EXPECT_FALSE(step_plant(p, s, 0.0, 5 * p.substep));
  EXPECT_EQ(s.theta, before.theta);
  EXPECT_EQ(s.omega, before.omega);
  PlantParams bad;
  bad.inertia = -1;
  EXPECT_FALSE(bad.valid());
  EXPECT_TRUE(p.valid());
}
