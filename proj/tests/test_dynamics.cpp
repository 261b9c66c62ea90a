// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "scalenav/dynamics.hpp"

using namespace scalenav;
using namespace scalenav::dynamics;

TEST_CASE("zero action at rest is a fixed point") {
  UavState s;
  s.position = {1.0, 2.0, 1.5};
  s.yaw = 0.4;
  CHECK(step(s, {}, {}) == s);
}

TEST_CASE("unit acceleration along x for one step") {
  const UavState s = step({}, {1.0, 0.0, 0.0, 0.0}, {});
  CHECK(s.velocity.x == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.position.x == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(s.velocity.y == 0.0);
  CHECK(s.position.z == 0.0);
}

TEST_CASE("speed saturates at the cap") {
  DynamicsConfig cfg;
  cfg.v_cap = 2.0;
  UavState s;
  int first_capped = -1;
  for (int k = 0; k < 100; ++k) {
    s = step(s, {3.0, 0.0, 0.0, 0.0}, cfg);
    if (first_capped < 0 && s.velocity.norm() == 2.0) first_capped = k;
  }
  CHECK(s.velocity.norm() == 2.0);
  // 3 m/s^2 * 0.1 s per step reaches 2 m/s on the seventh step.
  CHECK(first_capped == static_cast<int>(std::ceil(2.0 / 0.3)) - 1);
}

TEST_CASE("actions are clamped to their limits") {
  const DynamicsConfig cfg;
  const Action a = clamp_action({9.0, -9.0, 0.5, -4.0}, cfg);
  CHECK(a.a_x == cfg.a_max);
  CHECK(a.a_y == -cfg.a_max);
  CHECK(a.a_z == 0.5);
  CHECK(a.v_yaw == -cfg.yaw_rate_max);
}

TEST_CASE("random rollouts keep speed and yaw invariants") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  const DynamicsConfig cfg;
  UavState s;
  for (int k = 0; k < 20000; ++k) {
    s = step(s, {u(rng), u(rng), u(rng), u(rng)}, cfg);
    CHECK(s.velocity.norm() <= cfg.v_cap * (1 + 1e-12));
    CHECK(s.yaw > -kPi);
    CHECK(s.yaw <= kPi);
    CHECK(s.finite());
  }
}

TEST_CASE("unclamped steps invert exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const DynamicsConfig cfg;
  for (int k = 0; k < 1000; ++k) {
    UavState s;
    s.position = {u(rng), u(rng), u(rng)};
    s.velocity = {u(rng), u(rng), u(rng)};
    const Action a{u(rng), u(rng), u(rng), 0.0};
    const UavState n = step(s, a, cfg);
    const Vec3 p0 = n.position - n.velocity * cfg.dt;
    const Vec3 v0 = n.velocity - Vec3{a.a_x, a.a_y, a.a_z} * cfg.dt;
    CHECK((p0 - s.position).norm() < 1e-9);
    CHECK((v0 - s.velocity).norm() < 1e-9);
  }
}

TEST_CASE("body velocity rotates by the yaw") {
  UavState s;
  s.velocity = {0.0, 1.0, 0.0};
  s.yaw = kPi / 2;
  const Vec3 b = s.body_velocity();
  CHECK(b.x == doctest::Approx(1.0));
  CHECK(b.y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("invalid configuration is rejected") {
  DynamicsConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
