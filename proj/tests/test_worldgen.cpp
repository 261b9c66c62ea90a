// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "scalenav/worldgen.hpp"

using namespace scalenav;
using namespace scalenav::worldgen;

namespace {

double min_pairwise(const std::vector<Point2>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      best = std::min(best, std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
  return best;
}

World open_world(std::vector<Cylinder> obstacles, double half = 10.0, double ceiling = 4.0) {
  World w;
  w.config.bounds_min = {-half, -half, 0.0};
  w.config.bounds_max = {half, half, ceiling};
  w.config.ceiling_height = ceiling;
  w.obstacles = std::move(obstacles);
  return w;
}

}  // namespace

TEST_CASE("scale classes carry the published diameter ranges") {
  CHECK(ScaleClass::of(ScaleName::US).diameter_min == doctest::Approx(0.01));
  CHECK(ScaleClass::of(ScaleName::US).diameter_max == doctest::Approx(0.05));
  CHECK(ScaleClass::of(ScaleName::XL).diameter_max == doctest::Approx(5.0));
  for (auto n : {ScaleName::Nominal, ScaleName::US, ScaleName::S, ScaleName::M, ScaleName::L,
                 ScaleName::XL, ScaleName::MIX}) {
    CHECK(parse_scale(to_string(n)) == n);
  }
  CHECK_FALSE(parse_scale("huge").has_value());
}

TEST_CASE("poisson radius beyond the bounds diagonal yields at most one point") {
  WorldConfig cfg;
  cfg.poisson_radius = 40.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    cfg.seed = s;
    CHECK(sample_poisson_disk(cfg).size() <= 1);
  }
}

TEST_CASE("poisson samples respect the radius and stay in bounds") {
  for (double r : {0.5, 1.0, 2.0, 3.5}) {
    WorldConfig cfg;
    cfg.poisson_radius = r;
    for (std::uint64_t s = 0; s < 5; ++s) {
      cfg.seed = s;
      const auto pts = sample_poisson_disk(cfg);
      REQUIRE(pts.size() > 1);
      CHECK(min_pairwise(pts) >= r);
      for (const auto& p : pts) {
        CHECK(p.x >= cfg.bounds_min.x + r / 2);
        CHECK(p.x <= cfg.bounds_max.x - r / 2);
        CHECK(p.y >= cfg.bounds_min.y + r / 2);
        CHECK(p.y <= cfg.bounds_max.y - r / 2);
      }
    }
  }
}

TEST_CASE("20 m square at radius 2 gives a count between packing bounds") {
  WorldConfig cfg;
  cfg.poisson_radius = 2.0;
  const double side = 20.0 - cfg.poisson_radius;
  // Disks of radius r/2 are disjoint and lie in the (side + r) square; hexagonal
  // packing density bounds their number.
  const double hex = std::numbers::pi / (2.0 * std::sqrt(3.0));
  const double upper = hex * (side + 2.0) * (side + 2.0) / (std::numbers::pi * 1.0);
  // A saturated sample's radius-r disks cover the domain.
  const double lower = std::floor(side * side / (std::numbers::pi * 4.0));
  for (std::uint64_t s = 0; s < 10; ++s) {
    cfg.seed = s;
    const auto n = static_cast<double>(sample_poisson_disk(cfg).size());
    CHECK(n >= 25);
    CHECK(n <= 91);
    CHECK(n <= upper);
    CHECK(n >= lower);
  }
}

TEST_CASE("US worlds draw diameters inside 1-5 cm") {
  WorldConfig cfg;
  cfg.scale_class = ScaleClass::of(ScaleName::US);
  cfg.poisson_radius = cfg.scale_class.default_poisson_radius();
  for (std::uint64_t s = 0; s < 5; ++s) {
    cfg.seed = s;
    const World w = generate_world(cfg);
    REQUIRE_FALSE(w.obstacles.empty());
    for (const auto& c : w.obstacles) {
      CHECK(2 * c.radius >= 0.01);
      CHECK(2 * c.radius <= 0.05);
      CHECK(c.height == cfg.ceiling_height);
    }
  }
}

TEST_CASE("generated worlds are deterministic and keep start/goal clear") {
  for (auto name : {ScaleName::Nominal, ScaleName::M, ScaleName::XL, ScaleName::MIX}) {
    WorldConfig cfg;
    cfg.scale_class = ScaleClass::of(name);
    cfg.poisson_radius = cfg.scale_class.default_poisson_radius();
    cfg.seed = 11;
    const World a = generate_world(cfg);
    const World b = generate_world(cfg);
    std::ostringstream sa, sb;
    save_world(a, sa);
    save_world(b, sb);
    CHECK(sa.str() == sb.str());
    CHECK(signed_distance(a, a.start) >= cfg.clearance);
    CHECK(signed_distance(a, a.goal) >= cfg.clearance);
    CHECK(a.start.x < a.goal.x);
    for (std::size_t i = 0; i < a.obstacles.size(); ++i)
      for (std::size_t j = i + 1; j < a.obstacles.size(); ++j)
        CHECK(std::hypot(a.obstacles[i].center_x - a.obstacles[j].center_x,
                         a.obstacles[i].center_y - a.obstacles[j].center_y) >= cfg.poisson_radius);
  }
}

TEST_CASE("tiny domain produces a world with only start and goal") {
  WorldConfig cfg;
  cfg.bounds_max = {1.5, 1.5, 3.0};
  cfg.poisson_radius = 2.0;
  const World w = generate_world(cfg);
  CHECK(w.obstacles.empty());
  CHECK(inside_bounds(cfg, w.start));
  CHECK(inside_bounds(cfg, w.goal));
}

TEST_CASE("unsatisfiable clearance raises a placement error") {
  WorldConfig cfg;
  cfg.bounds_max = {2.0, 2.0, 0.4};
  cfg.ceiling_height = 0.4;
  cfg.clearance = 0.5;
  CHECK_THROWS_AS(generate_world(cfg), PlacementError);
}

TEST_CASE("invalid configs are rejected") {
  WorldConfig cfg;
  cfg.poisson_radius = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.bounds_max.x = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("signed distance analytic cases") {
  const World w = open_world({{2.0, 0.0, 0.5, 4.0}});
  // Lateral distance to the cylinder is 1.5; floor and ceiling are 2 m away.
  CHECK(obstacle_distance(w, {0.0, 0.0, 1.0}) == doctest::Approx(1.5));
  CHECK(signed_distance(w, {0.0, 0.0, 2.0}) == doctest::Approx(1.5));
  // With the floor 1 m below, the floor term wins.
  CHECK(signed_distance(w, {0.0, 0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(signed_distance(w, {2.5, 0.0, 2.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(signed_distance(w, {2.0, 0.0, 2.0}) == doctest::Approx(-0.5));
  CHECK(signed_distance(w, {-9.5, 3.0, 2.0}) == doctest::Approx(0.5));
  CHECK(std::isinf(obstacle_distance(open_world({}), {0, 0, 1})));
}

TEST_CASE("signed distance is 1-Lipschitz") {
  WorldConfig cfg;
  cfg.seed = 3;
  const World w = generate_world(cfg);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(-1.0, 21.0), uz(-0.5, 3.5);
  for (int i = 0; i < 20000; ++i) {
    const Vec3 p{ux(rng), ux(rng), uz(rng)}, q{ux(rng), ux(rng), uz(rng)};
    CHECK(std::abs(signed_distance(w, p) - signed_distance(w, q)) <= (p - q).norm() + 1e-12);
  }
}

TEST_CASE("world text form round trips") {
  WorldConfig cfg;
  cfg.scale_class = ScaleClass::of(ScaleName::MIX);
  cfg.poisson_radius = cfg.scale_class.default_poisson_radius();
  cfg.seed = 99;
  const World w = generate_world(cfg);
  std::stringstream ss;
  save_world(w, ss);
  const World r = load_world(ss);
  REQUIRE(r.obstacles.size() == w.obstacles.size());
  for (std::size_t i = 0; i < w.obstacles.size(); ++i) {
    CHECK(r.obstacles[i].center_x == w.obstacles[i].center_x);
    CHECK(r.obstacles[i].radius == w.obstacles[i].radius);
  }
  CHECK(r.start == w.start);
  CHECK(r.goal == w.goal);
  CHECK(r.config.seed == w.config.seed);
  std::istringstream bad("world 0 0 0 1 1\n");
  CHECK_THROWS_AS(load_world(bad), InvalidArgument);
}
