// SPDX-License-Identifier: Apache-2.0

#include "scalenav/depthcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace scalenav::depthcam {

double CameraIntrinsics::focal() const { return 0.5 * width / std::tan(0.5 * hfov); }

double CameraIntrinsics::vfov() const { return 2.0 * std::atan(cy() / focal()); }

void CameraIntrinsics::validate() const {
  if (width < 8 || height < 8) throw InvalidArgument("camera resolution must be >= 8x8");
  if (!(hfov > 0.0 && hfov < kPi)) throw InvalidArgument("hfov must lie in (0, pi)");
  if (!(max_range > 0.0)) throw InvalidArgument("max_range must be positive");
}

DepthImage::DepthImage(int w, int h, double range, double fill)
    : width(w), height(h), max_range(range), data(static_cast<std::size_t>(w) * h, fill) {}

namespace {

struct Basis {
  Vec3 right;
  Vec3 down;
  Vec3 forward;
};

Basis basis_of(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {{s, -c, 0.0}, {0.0, 0.0, -1.0}, {c, s, 0.0}};
}

struct Hit {
  double s{std::numeric_limits<double>::infinity()};
  int tag{kHitNone};

  void offer(double cand, int cand_tag) {
    if (cand > 0.0 && cand < s) {
      s = cand;
      tag = cand_tag;
    }
  }
};

// Ray o + s*d; d has unit forward component so s is z-depth.
Hit cast(const worldgen::World& world, const Vec3& o, const Vec3& d) {
  const auto& cfg = world.config;
  Hit hit;
  if (d.z < 0.0) hit.offer(-o.z / d.z, kHitFloor);
  if (d.z > 0.0) hit.offer((cfg.ceiling_height - o.z) / d.z, kHitCeiling);
  if (d.x < 0.0) hit.offer((cfg.bounds_min.x - o.x) / d.x, kHitWall);
  if (d.x > 0.0) hit.offer((cfg.bounds_max.x - o.x) / d.x, kHitWall);
  if (d.y < 0.0) hit.offer((cfg.bounds_min.y - o.y) / d.y, kHitWall);
  if (d.y > 0.0) hit.offer((cfg.bounds_max.y - o.y) / d.y, kHitWall);

  const double a = d.x * d.x + d.y * d.y;
  for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
    const auto& cyl = world.obstacles[i];
    const double ex = o.x - cyl.center_x;
    const double ey = o.y - cyl.center_y;
    const double r2 = cyl.radius * cyl.radius;
    const int tag = static_cast<int>(i);
    if (a > 0.0) {
      const double b = 2.0 * (d.x * ex + d.y * ey);
      const double c = ex * ex + ey * ey - r2;
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        // Stable quadratic roots.
        const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        const double roots[2] = {q / a, q != 0.0 ? c / q : q / a};
        for (double s : roots) {
          const double z = o.z + s * d.z;
          if (z >= 0.0 && z <= cyl.height) hit.offer(s, tag);
        }
      }
    }
    if (d.z != 0.0) {
      const double s = (cyl.height - o.z) / d.z;
      const double px = ex + s * d.x;
      const double py = ey + s * d.y;
      if (px * px + py * py <= r2) hit.offer(s, tag);
    }
  }
  return hit;
}

}  // namespace

TaggedRender render_tagged(const worldgen::World& world, const CameraPose& pose,
                           const CameraIntrinsics& intr) {
  intr.validate();
  TaggedRender out{DepthImage(intr.width, intr.height, intr.max_range, intr.max_range),
                   std::vector<int>(static_cast<std::size_t>(intr.width) * intr.height, kHitNone)};
  const Basis b = basis_of(pose.yaw);
  const double f = intr.focal();
  for (int v = 0; v < intr.height; ++v) {
    const double yn = (v - intr.cy()) / f;
    for (int u = 0; u < intr.width; ++u) {
      const double xn = (u - intr.cx()) / f;
      const Vec3 dir = b.right * xn + b.down * yn + b.forward;
      const Hit hit = cast(world, pose.position, dir);
      if (hit.s < intr.max_range) {
        out.depth.at(u, v) = hit.s;
        out.tags[static_cast<std::size_t>(v) * intr.width + u] = hit.tag;
      }
    }
  }
  return out;
}

DepthImage render_depth(const worldgen::World& world, const CameraPose& pose,
                        const CameraIntrinsics& intr) {
  return render_tagged(world, pose, intr).depth;
}

Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& intr) {
  const double f = intr.focal();
  return {(u - intr.cx()) / f * depth, (v - intr.cy()) / f * depth, depth};
}

Vec3 camera_to_world(const Vec3& p, const CameraPose& pose) {
  const Basis b = basis_of(pose.yaw);
  return pose.position + b.right * p.x + b.down * p.y + b.forward * p.z;
}

Vec3 world_to_camera(const Vec3& p, const CameraPose& pose) {
  const Basis b = basis_of(pose.yaw);
  const Vec3 q = p - pose.position;
  return {q.dot(b.right), q.dot(b.down), q.dot(b.forward)};
}

namespace {

long long to_mm(double depth, long long max_mm) {
  return std::clamp(std::llround(depth * 1000.0), 1LL, max_mm);
}

}  // namespace

DepthImage quantize_mm(const DepthImage& image) {
  DepthImage out = image;
  const long long max_mm = std::llround(image.max_range * 1000.0);
  for (double& d : out.data) d = static_cast<double>(to_mm(d, max_mm)) / 1000.0;
  return out;
}

std::filesystem::path meta_path(const std::filesystem::path& pgm) {
  auto p = pgm;
  p.replace_extension(".meta");
  return p;
}

void save_depth(const std::filesystem::path& pgm, const DepthImage& image,
                const CameraIntrinsics& intr, const CameraPose& pose) {
  const long long max_mm = std::llround(image.max_range * 1000.0);
  if (max_mm > 65535) throw InvalidArgument("max_range too large for 16-bit PGM");
  {
    std::ofstream os(pgm);
    if (!os) throw std::runtime_error("cannot write " + pgm.string());
    os << "P2\n" << image.width << ' ' << image.height << '\n' << max_mm << '\n';
    for (int v = 0; v < image.height; ++v) {
      for (int u = 0; u < image.width; ++u) {
        os << to_mm(image.at(u, v), max_mm) << (u + 1 == image.width ? '\n' : ' ');
      }
    }
    if (!os) throw std::runtime_error("write failed for " + pgm.string());
  }
  std::ofstream ms(meta_path(pgm));
  if (!ms) throw std::runtime_error("cannot write " + meta_path(pgm).string());
  ms.precision(17);
  ms << "width " << intr.width << "\nheight " << intr.height << "\nhfov " << intr.hfov
     << "\nmax_range " << intr.max_range << "\nposition " << pose.position.x << ' '
     << pose.position.y << ' ' << pose.position.z << "\nyaw " << pose.yaw << '\n';
}

namespace {

// Next PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  while (is >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(is, rest);
  }
  throw InvalidArgument("truncated PGM header");
}

}  // namespace

DepthFile load_depth(const std::filesystem::path& pgm) {
  DepthFile out;
  std::ifstream ms(meta_path(pgm));
  if (!ms) throw InvalidArgument("missing depth sidecar " + meta_path(pgm).string());
  std::string key;
  while (ms >> key) {
    if (key == "width") ms >> out.intr.width;
    else if (key == "height") ms >> out.intr.height;
    else if (key == "hfov") ms >> out.intr.hfov;
    else if (key == "max_range") ms >> out.intr.max_range;
    else if (key == "position") ms >> out.pose.position.x >> out.pose.position.y >> out.pose.position.z;
    else if (key == "yaw") ms >> out.pose.yaw;
    else throw InvalidArgument("unknown sidecar key '" + key + "'");
    if (!ms) throw InvalidArgument("bad sidecar value for '" + key + "'");
  }

  std::ifstream is(pgm);
  if (!is) throw InvalidArgument("cannot read " + pgm.string());
  if (pgm_token(is) != "P2") throw InvalidArgument("not an ASCII PGM: " + pgm.string());
  const int w = std::stoi(pgm_token(is));
  const int h = std::stoi(pgm_token(is));
  const long long max_mm = std::stoll(pgm_token(is));
  if (w != out.intr.width || h != out.intr.height) {
    throw InvalidArgument("PGM size disagrees with sidecar: " + pgm.string());
  }
  out.image = DepthImage(w, h, static_cast<double>(max_mm) / 1000.0, 0.0);
  for (double& d : out.image.data) {
    long long mm = 0;
    if (!(is >> mm) || mm < 0 || mm > max_mm) throw InvalidArgument("bad PGM pixel in " + pgm.string());
    d = static_cast<double>(mm) / 1000.0;
  }
  return out;
}

}  // namespace scalenav::depthcam
