// SPDX-License-Identifier: Apache-2.0
//
// Analytic pinhole depth camera over cylinder worlds.

#ifndef SCALENAV_DEPTHCAM_HPP_
#define SCALENAV_DEPTHCAM_HPP_

#include <filesystem>
#include <vector>

#include "scalenav/common.hpp"
#include "scalenav/worldgen.hpp"

namespace scalenav::depthcam {

/// Square-pixel pinhole model; principal point at (width/2, height/2).
/// Pixel (u, v) casts the ray through image coordinate (u, v).
struct CameraIntrinsics {
  int width{64};
  int height{48};
  double hfov{87.0 * kPi / 180.0};
  double max_range{10.0};

  double focal() const;
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
  double vfov() const;
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Optical axis horizontal, rotated by yaw about world z. Zero pitch/roll.
struct CameraPose {
  Vec3 position;
  double yaw{0.0};
};

/// Row-major z-depth in meters; misses hold exactly max_range.
struct DepthImage {
  int width{0};
  int height{0};
  double max_range{0.0};
  std::vector<double> data;

  DepthImage() = default;
  DepthImage(int w, int h, double range, double fill);

  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const DepthImage& o) const { return width == o.width && height == o.height; }
};

/// Primitive tag per pixel, produced alongside the depth.
enum HitTag : int {
  kHitNone = -1,
  kHitFloor = -2,
  kHitCeiling = -3,
  kHitWall = -4,
  // values >= 0 index World::obstacles
};

struct TaggedRender {
  DepthImage depth;
  std::vector<int> tags;
};

DepthImage render_depth(const worldgen::World& world, const CameraPose& pose,
                        const CameraIntrinsics& intr);
TaggedRender render_tagged(const worldgen::World& world, const CameraPose& pose,
                           const CameraIntrinsics& intr);

/// Camera-frame point (x right, y down, z forward) with z-depth `depth`.
Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& intr);

Vec3 camera_to_world(const Vec3& p_cam, const CameraPose& pose);
Vec3 world_to_camera(const Vec3& p_world, const CameraPose& pose);

struct DepthFile {
  DepthImage image;
  CameraIntrinsics intr;
  CameraPose pose;
};

/// ASCII PGM (P2) of millimeter integers plus a `.meta` sidecar.
void save_depth(const std::filesystem::path& pgm, const DepthImage& image,
                const CameraIntrinsics& intr, const CameraPose& pose);
DepthFile load_depth(const std::filesystem::path& pgm);
std::filesystem::path meta_path(const std::filesystem::path& pgm);

/// Millimeter quantization applied by save_depth.
DepthImage quantize_mm(const DepthImage& image);

}  // namespace scalenav::depthcam

#endif  // SCALENAV_DEPTHCAM_HPP_
