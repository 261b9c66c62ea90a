// SPDX-License-Identifier: Apache-2.0
//
// Collision-aware depth preprocessing: contours, edge inflation, distance
// correction and min fusion.

#ifndef SCALENAV_CAPRE_HPP_
#define SCALENAV_CAPRE_HPP_

#include <span>
#include <stdexcept>
#include <vector>

#include "scalenav/depthcam.hpp"

namespace scalenav::capre {

/// Floor applied by distance correction.
inline constexpr double kMinDepth = 1e-3;

struct CollisionAwareConfig {
  double d_uav{0.30};
  double contour_grad_threshold{0.30};
  /// Splat sphere radius as a fraction of d_uav (0.5 inflates by half the body size).
  double inflation_factor{0.5};
  depthcam::CameraIntrinsics intr;

  double inflation_radius() const { return inflation_factor * d_uav; }
  void validate() const;
};

struct ContourPixel {
  int u{0};
  int v{0};
  double depth{0.0};
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Near side of every 4-neighbour jump larger than the threshold.
std::vector<ContourPixel> extract_contours(const depthcam::DepthImage& img,
                                           const CollisionAwareConfig& cfg);

/// Camera-frame points of the contour pixels.
std::vector<Vec3> backproject_contours(std::span<const ContourPixel> contours,
                                       const CollisionAwareConfig& cfg);

/// Sphere splats of radius inflation_radius() composed by pixel-wise min.
depthcam::DepthImage render_edge_inflation(std::span<const Vec3> points,
                                           const CollisionAwareConfig& cfg);

/// max(raw - d_uav/2, kMinDepth) on every pixel.
depthcam::DepthImage distance_correct(const depthcam::DepthImage& img,
                                      const CollisionAwareConfig& cfg);

/// Pixel-wise minimum. Throws DimensionMismatch.
depthcam::DepthImage fuse(const depthcam::DepthImage& infl, const depthcam::DepthImage& corr);

struct CollisionAwareStages {
  std::vector<ContourPixel> contours;
  depthcam::DepthImage inflation;
  depthcam::DepthImage corrected;
  depthcam::DepthImage fused;
};

CollisionAwareStages collision_aware_stages(const depthcam::DepthImage& img,
                                            const CollisionAwareConfig& cfg);
depthcam::DepthImage collision_aware(const depthcam::DepthImage& img,
                                     const CollisionAwareConfig& cfg);

}  // namespace scalenav::capre

#endif  // SCALENAV_CAPRE_HPP_
