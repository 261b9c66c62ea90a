// SPDX-License-Identifier: Apache-2.0

#include "scalenav/worldgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace scalenav::worldgen {

namespace {

constexpr int kBridsonAttempts = 30;
constexpr int kPlacementAttempts = 1000;

constexpr std::array<std::string_view, 7> kScaleNames = {"Nominal", "US", "S", "M",
                                                         "L",       "XL", "MIX"};

}  // namespace

std::string_view to_string(ScaleName name) {
  return kScaleNames[static_cast<std::size_t>(name)];
}

std::optional<ScaleName> parse_scale(std::string_view text) {
  for (std::size_t i = 0; i < kScaleNames.size(); ++i) {
    if (kScaleNames[i] == text) return static_cast<ScaleName>(i);
  }
  return std::nullopt;
}

ScaleClass ScaleClass::of(ScaleName name) {
  switch (name) {
    case ScaleName::Nominal: return {name, 0.10, 0.50};
    case ScaleName::US: return {name, 0.01, 0.05};
    case ScaleName::S: return {name, 0.10, 0.30};
    case ScaleName::M: return {name, 0.40, 0.80};
    case ScaleName::L: return {name, 1.00, 2.00};
    case ScaleName::XL: return {name, 4.00, 5.00};
    case ScaleName::MIX: return {name, 0.01, 5.00};
  }
  throw InvalidArgument("unknown scale class");
}

double ScaleClass::default_poisson_radius() const {
  // Keep at least ~1.5 m of free gap between the largest neighbouring pillars.
  return std::max(2.0, diameter_max + 1.5);
}

void WorldConfig::validate() const {
  if (!(bounds_min.x < bounds_max.x && bounds_min.y < bounds_max.y &&
        bounds_min.z < bounds_max.z)) {
    throw InvalidArgument("world bounds must satisfy min < max componentwise");
  }
  if (!(poisson_radius > 0.0)) throw InvalidArgument("poisson_radius must be positive");
  if (!(scale_class.diameter_min > 0.0 &&
        scale_class.diameter_min <= scale_class.diameter_max)) {
    throw InvalidArgument("scale class needs 0 < diameter_min <= diameter_max");
  }
  if (!(ceiling_height > 0.0)) throw InvalidArgument("ceiling_height must be positive");
  if (!(clearance >= 0.0)) throw InvalidArgument("clearance must be non-negative");
}

std::vector<Point2> sample_poisson_disk(const WorldConfig& config) {
  std::mt19937_64 rng(config.seed);
  return sample_poisson_disk(config, rng);
}

std::vector<Point2> sample_poisson_disk(const WorldConfig& config, std::mt19937_64& rng) {
  const double r = config.poisson_radius;
  if (!(r > 0.0)) throw InvalidArgument("poisson_radius must be positive");
  const double x0 = config.bounds_min.x + 0.5 * r;
  const double y0 = config.bounds_min.y + 0.5 * r;
  const double x1 = config.bounds_max.x - 0.5 * r;
  const double y1 = config.bounds_max.y - 0.5 * r;
  if (!(x1 > x0) || !(y1 > y0)) return {};

  const double cell = r / std::sqrt(2.0);
  const int gw = std::max(1, static_cast<int>(std::ceil((x1 - x0) / cell)));
  const int gh = std::max(1, static_cast<int>(std::ceil((y1 - y0) / cell)));
  std::vector<int> grid(static_cast<std::size_t>(gw) * gh, -1);

  auto cell_of = [&](const Point2& p) {
    const int i = std::clamp(static_cast<int>((p.x - x0) / cell), 0, gw - 1);
    const int j = std::clamp(static_cast<int>((p.y - y0) / cell), 0, gh - 1);
    return std::pair{i, j};
  };

  std::vector<Point2> points;
  std::vector<int> active;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto insert = [&](const Point2& p) {
    const auto [i, j] = cell_of(p);
    grid[static_cast<std::size_t>(j) * gw + i] = static_cast<int>(points.size());
    active.push_back(static_cast<int>(points.size()));
    points.push_back(p);
  };

  auto fits = [&](const Point2& p) {
    if (p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1) return false;
    const auto [ci, cj] = cell_of(p);
    for (int j = std::max(0, cj - 2); j <= std::min(gh - 1, cj + 2); ++j) {
      for (int i = std::max(0, ci - 2); i <= std::min(gw - 1, ci + 2); ++i) {
        const int idx = grid[static_cast<std::size_t>(j) * gw + i];
        if (idx < 0) continue;
        const double dx = p.x - points[idx].x;
        const double dy = p.y - points[idx].y;
        if (dx * dx + dy * dy < r * r) return false;
      }
    }
    return true;
  };

  insert({x0 + unit(rng) * (x1 - x0), y0 + unit(rng) * (y1 - y0)});
  while (!active.empty()) {
    const auto slot = static_cast<std::size_t>(unit(rng) * static_cast<double>(active.size()));
    const std::size_t a = std::min(slot, active.size() - 1);
    const Point2 center = points[active[a]];
    bool found = false;
    for (int k = 0; k < kBridsonAttempts; ++k) {
      // Uniform by area over the annulus [r, 2r).
      const double rho = std::sqrt(r * r + unit(rng) * 3.0 * r * r);
      const double phi = 2.0 * kPi * unit(rng);
      const Point2 cand{center.x + rho * std::cos(phi), center.y + rho * std::sin(phi)};
      if (fits(cand)) {
        insert(cand);
        found = true;
        break;
      }
    }
    if (!found) {
      active[a] = active.back();
      active.pop_back();
    }
  }
  return points;
}

bool inside_bounds(const WorldConfig& c, const Vec3& p) {
  return p.x >= c.bounds_min.x && p.x <= c.bounds_max.x && p.y >= c.bounds_min.y &&
         p.y <= c.bounds_max.y && p.z >= c.bounds_min.z && p.z <= c.bounds_max.z;
}

double obstacle_distance(const World& world, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : world.obstacles) {
    best = std::min(best, std::hypot(p.x - c.center_x, p.y - c.center_y) - c.radius);
  }
  return best;
}

double signed_distance(const World& world, const Vec3& p) {
  const auto& c = world.config;
  double d = obstacle_distance(world, p);
  d = std::min(d, p.z);                     // floor at z = 0
  d = std::min(d, c.ceiling_height - p.z);  // ceiling
  d = std::min({d, p.x - c.bounds_min.x, c.bounds_max.x - p.x, p.y - c.bounds_min.y,
                c.bounds_max.y - p.y});
  return d;
}

World generate_world(const WorldConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  World world;
  world.config = config;

  const auto points = sample_poisson_disk(config, rng);
  std::uniform_real_distribution<double> diameter(config.scale_class.diameter_min,
                                                  config.scale_class.diameter_max);
  world.obstacles.reserve(points.size());
  for (const auto& p : points) {
    world.obstacles.push_back({p.x, p.y, 0.5 * diameter(rng), config.ceiling_height});
  }

  const double size_x = config.bounds_max.x - config.bounds_min.x;
  const double size_y = config.bounds_max.y - config.bounds_min.y;
  const double margin = std::min(1.0, 0.25 * size_x);
  const double yc = 0.5 * (config.bounds_min.y + config.bounds_max.y);
  const double zc =
      0.5 * (config.bounds_min.z + std::min(config.bounds_max.z, config.ceiling_height));
  const double jitter_y = std::max(0.0, 0.5 * size_y - config.clearance);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  auto place = [&](double x_nominal, const char* what) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      Vec3 p{x_nominal, yc, zc};
      if (attempt > 0) {
        // Widen the search gradually so clear nominal spots stay preferred.
        const double grow = std::min(1.0, attempt / 100.0);
        p.x += sym(rng) * 0.5 * margin;
        p.y += sym(rng) * jitter_y * grow;
      }
      if (signed_distance(world, p) >= config.clearance) return p;
    }
    throw PlacementError(std::string("cannot place ") + what + " with required clearance");
  };

  world.start = place(config.bounds_min.x + margin, "start");
  world.goal = place(config.bounds_max.x - margin, "goal");
  return world;
}

void save_world(const World& world, std::ostream& os) {
  const auto& c = world.config;
  const auto old_prec = os.precision(17);
  os << "world " << c.bounds_min.x << ' ' << c.bounds_min.y << ' ' << c.bounds_min.z << ' '
     << c.bounds_max.x << ' ' << c.bounds_max.y << ' ' << c.bounds_max.z << " seed " << c.seed
     << " class " << to_string(c.scale_class.name) << ' ' << c.scale_class.diameter_min << ' '
     << c.scale_class.diameter_max << " poisson " << c.poisson_radius << " ceiling "
     << c.ceiling_height << " clearance " << c.clearance << '\n';
  for (const auto& cyl : world.obstacles) {
    os << cyl.center_x << ' ' << cyl.center_y << ' ' << cyl.radius << ' ' << cyl.height << '\n';
  }
  os << "start " << world.start.x << ' ' << world.start.y << ' ' << world.start.z << '\n';
  os << "goal " << world.goal.x << ' ' << world.goal.y << ' ' << world.goal.z << '\n';
  os.precision(old_prec);
}

namespace {

void expect_token(std::istream& is, std::string_view want) {
  std::string tok;
  if (!(is >> tok) || tok != want) {
    throw InvalidArgument("world file: expected '" + std::string(want) + "', got '" + tok + "'");
  }
}

Vec3 read_vec(std::istream& is) {
  Vec3 v;
  if (!(is >> v.x >> v.y >> v.z)) throw InvalidArgument("world file: bad vector");
  return v;
}

}  // namespace

World load_world(std::istream& is) {
  World world;
  auto& c = world.config;
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("world file: empty");
  {
    std::istringstream hs(line);
    expect_token(hs, "world");
    c.bounds_min = read_vec(hs);
    c.bounds_max = read_vec(hs);
    expect_token(hs, "seed");
    hs >> c.seed;
    expect_token(hs, "class");
    std::string name;
    hs >> name;
    const auto scale = parse_scale(name);
    if (!scale) throw InvalidArgument("world file: unknown class '" + name + "'");
    c.scale_class.name = *scale;
    hs >> c.scale_class.diameter_min >> c.scale_class.diameter_max;
    expect_token(hs, "poisson");
    hs >> c.poisson_radius;
    expect_token(hs, "ceiling");
    hs >> c.ceiling_height;
    expect_token(hs, "clearance");
    if (!(hs >> c.clearance)) throw InvalidArgument("world file: truncated header");
  }
  bool have_start = false;
  bool have_goal = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line.rfind("start ", 0) == 0) {
      expect_token(ls, "start");
      world.start = read_vec(ls);
      have_start = true;
    } else if (line.rfind("goal ", 0) == 0) {
      expect_token(ls, "goal");
      world.goal = read_vec(ls);
      have_goal = true;
    } else {
      Cylinder cyl;
      if (!(ls >> cyl.center_x >> cyl.center_y >> cyl.radius >> cyl.height)) {
        throw InvalidArgument("world file: bad cylinder line '" + line + "'");
      }
      world.obstacles.push_back(cyl);
    }
  }
  if (!have_start || !have_goal) throw InvalidArgument("world file: missing start/goal");
  c.validate();
  return world;
}

}  // namespace scalenav::worldgen
