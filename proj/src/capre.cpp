// SPDX-License-Identifier: Apache-2.0

#include "scalenav/capre.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace scalenav::capre {

using depthcam::DepthImage;

void CollisionAwareConfig::validate() const {
  if (!(d_uav > 0.0)) throw InvalidArgument("d_uav must be positive");
  if (!(contour_grad_threshold > 0.0)) throw InvalidArgument("contour threshold must be positive");
  if (!(inflation_factor >= 0.0)) throw InvalidArgument("inflation factor must be non-negative");
  intr.validate();
}

namespace {

void require_camera_shape(const DepthImage& img, const CollisionAwareConfig& cfg) {
  if (img.width != cfg.intr.width || img.height != cfg.intr.height) {
    throw DimensionMismatch("image " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + " does not match intrinsics " +
                            std::to_string(cfg.intr.width) + "x" +
                            std::to_string(cfg.intr.height));
  }
}

}  // namespace

std::vector<ContourPixel> extract_contours(const DepthImage& img, const CollisionAwareConfig& cfg) {
  require_camera_shape(img, cfg);
  std::vector<ContourPixel> out;
  const double thr = cfg.contour_grad_threshold;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const double d = img.at(u, v);
      if (d >= img.max_range) continue;
      const bool jump = (u > 0 && img.at(u - 1, v) - d > thr) ||
                        (u + 1 < img.width && img.at(u + 1, v) - d > thr) ||
                        (v > 0 && img.at(u, v - 1) - d > thr) ||
                        (v + 1 < img.height && img.at(u, v + 1) - d > thr);
      if (jump) out.push_back({u, v, d});
    }
  }
  return out;
}

std::vector<Vec3> backproject_contours(std::span<const ContourPixel> contours,
                                       const CollisionAwareConfig& cfg) {
  std::vector<Vec3> pts;
  pts.reserve(contours.size());
  for (const auto& c : contours) pts.push_back(depthcam::backproject(c.u, c.v, c.depth, cfg.intr));
  return pts;
}

DepthImage render_edge_inflation(std::span<const Vec3> points, const CollisionAwareConfig& cfg) {
  const auto& intr = cfg.intr;
  DepthImage out(intr.width, intr.height, intr.max_range, intr.max_range);
  const double rho = cfg.inflation_radius();
  if (!(rho > 0.0)) return out;
  const double f = intr.focal();

  for (const Vec3& p : points) {
    if (!(p.z > 0.0)) throw InvalidArgument("contour points need positive z");
    int u0 = 0, u1 = intr.width - 1, v0 = 0, v1 = intr.height - 1;
    if (p.z - rho > 1e-9) {
      // Conservative footprint from the projected bounding box of the sphere.
      const double zn = p.z - rho, zf = p.z + rho;
      const double xl = std::min((p.x - rho) / zn, (p.x - rho) / zf);
      const double xh = std::max((p.x + rho) / zn, (p.x + rho) / zf);
      const double yl = std::min((p.y - rho) / zn, (p.y - rho) / zf);
      const double yh = std::max((p.y + rho) / zn, (p.y + rho) / zf);
      u0 = std::max(u0, static_cast<int>(std::floor(intr.cx() + f * xl)));
      u1 = std::min(u1, static_cast<int>(std::ceil(intr.cx() + f * xh)));
      v0 = std::max(v0, static_cast<int>(std::floor(intr.cy() + f * yl)));
      v1 = std::min(v1, static_cast<int>(std::ceil(intr.cy() + f * yh)));
    }
    const double pp = p.dot(p) - rho * rho;
    for (int v = v0; v <= v1; ++v) {
      const double yn = (v - intr.cy()) / f;
      for (int u = u0; u <= u1; ++u) {
        const double xn = (u - intr.cx()) / f;
        // |s*d - p|^2 = rho^2 with d = (xn, yn, 1).
        const double a = xn * xn + yn * yn + 1.0;
        const double b = xn * p.x + yn * p.y + p.z;  // half of -B
        const double disc = b * b - a * pp;
        if (disc < 0.0) continue;
        double s = (b - std::sqrt(disc)) / a;
        if (pp <= 0.0) s = kMinDepth;  // camera inside the sphere
        if (s <= 0.0) continue;
        double& px = out.at(u, v);
        px = std::min(px, std::max(s, kMinDepth));
      }
    }
  }
  return out;
}

DepthImage distance_correct(const DepthImage& img, const CollisionAwareConfig& cfg) {
  DepthImage out = img;
  const double half = 0.5 * cfg.d_uav;
  for (double& d : out.data) d = std::max(d - half, kMinDepth);
  return out;
}

DepthImage fuse(const DepthImage& infl, const DepthImage& corr) {
  if (!infl.same_shape(corr)) {
    throw DimensionMismatch("fuse: " + std::to_string(infl.width) + "x" +
                            std::to_string(infl.height) + " vs " + std::to_string(corr.width) +
                            "x" + std::to_string(corr.height));
  }
  DepthImage out = corr;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::min(infl.data[i], corr.data[i]);
  }
  return out;
}

CollisionAwareStages collision_aware_stages(const DepthImage& img, const CollisionAwareConfig& cfg) {
  cfg.validate();
  CollisionAwareStages st;
  st.contours = extract_contours(img, cfg);
  const auto pts = backproject_contours(st.contours, cfg);
  st.inflation = render_edge_inflation(pts, cfg);
  st.corrected = distance_correct(img, cfg);
  st.fused = fuse(st.inflation, st.corrected);
  return st;
}

DepthImage collision_aware(const DepthImage& img, const CollisionAwareConfig& cfg) {
  return collision_aware_stages(img, cfg).fused;
}

}  // namespace scalenav::capre
