// SPDX-License-Identifier: Apache-2.0
//
// Procedural arenas of vertical cylinders placed by Poisson-disk sampling.

#ifndef SCALENAV_WORLDGEN_HPP_
#define SCALENAV_WORLDGEN_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "scalenav/common.hpp"

namespace scalenav::worldgen {

enum class ScaleName { Nominal, US, S, M, L, XL, MIX };

std::string_view to_string(ScaleName name);
std::optional<ScaleName> parse_scale(std::string_view text);

/// Obstacle diameter range of one environment class.
struct ScaleClass {
  ScaleName name{ScaleName::Nominal};
  double diameter_min{0.10};
  double diameter_max{0.50};

  static ScaleClass of(ScaleName name);
  /// Poisson radius used when the config leaves it unset.
  double default_poisson_radius() const;
};

struct Cylinder {
  double center_x{0.0};
  double center_y{0.0};
  double radius{0.1};
  double height{3.0};  // base at z = 0
};

struct WorldConfig {
  Vec3 bounds_min{0.0, 0.0, 0.0};
  Vec3 bounds_max{20.0, 20.0, 3.0};
  ScaleClass scale_class{ScaleClass::of(ScaleName::Nominal)};
  double poisson_radius{2.0};
  double ceiling_height{3.0};
  std::uint64_t seed{0};
  /// Required free distance around start and goal.
  double clearance{0.30};

  void validate() const;
};

struct Point2 {
  double x{0.0};
  double y{0.0};
};

struct World {
  std::vector<Cylinder> obstacles;
  WorldConfig config;
  Vec3 start;
  Vec3 goal;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bridson dart throwing (k = 30) inside the bounds shrunk by radius/2.
std::vector<Point2> sample_poisson_disk(const WorldConfig& config);
std::vector<Point2> sample_poisson_disk(const WorldConfig& config, std::mt19937_64& rng);

/// One cylinder per Poisson point, then start/goal on opposite x faces.
/// Throws PlacementError when start or goal cannot be cleared.
World generate_world(const WorldConfig& config);

/// Exact signed distance to cylinders (lateral), floor, ceiling and walls.
double signed_distance(const World& world, const Vec3& p);
/// Signed distance to cylinder surfaces only; +inf for an empty world.
double obstacle_distance(const World& world, const Vec3& p);

bool inside_bounds(const WorldConfig& config, const Vec3& p);

/// Line-oriented text form: header, `cx cy radius height` rows, start, goal.
void save_world(const World& world, std::ostream& os);
World load_world(std::istream& is);

}  // namespace scalenav::worldgen

#endif  // SCALENAV_WORLDGEN_HPP_
