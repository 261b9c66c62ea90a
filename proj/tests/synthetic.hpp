// SPDX-License-Identifier: Apache-2.0
//
// Synthetic depth sequences for representation tests.

#ifndef SCALENAV_TESTS_SYNTHETIC_HPP_
#define SCALENAV_TESTS_SYNTHETIC_HPP_

#include <random>
#include <vector>

#include "scalenav/capre.hpp"
#include "scalenav/repr.hpp"
#include "scenes.hpp"

namespace synthetic {

using scalenav::depthcam::DepthImage;

struct Sequence {
  std::vector<DepthImage> raw;
  std::vector<DepthImage> ca;
};

/// Camera flying forward through a corridor with a few random cylinders.
inline Sequence forward_flight(std::mt19937_64& rng, const scalenav::capre::CollisionAwareConfig& cfg,
                               int length, double step = 0.1) {
  std::uniform_real_distribution<double> ux(1.5, 6.0), uy(-1.5, 1.5), ur(0.05, 0.4), uyaw(-0.3, 0.3);
  std::uniform_int_distribution<int> count(1, 3);
  std::vector<scalenav::worldgen::Cylinder> obs;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) obs.push_back({ux(rng), uy(rng), ur(rng), 3.0});
  const auto world = scenes::arena(-2.0, -3.0, 8.0, 3.0, 3.0, obs);
  const double yaw = 0.5 * uyaw(rng);
  Sequence s;
  for (int t = 0; t < length; ++t) {
    const scalenav::depthcam::CameraPose pose{{-1.0 + step * t, 0.3 * uyaw(rng), 1.5}, yaw};
    s.raw.push_back(scalenav::depthcam::render_depth(world, pose, cfg.intr));
    s.ca.push_back(scalenav::capre::collision_aware(s.raw.back(), cfg));
  }
  return s;
}

inline scalenav::repr::ImageDataset dataset(int episodes, int length, const scalenav::capre::CollisionAwareConfig& cfg,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  scalenav::repr::ImageDataset data;
  for (int e = 0; e < episodes; ++e) {
    const Sequence s = forward_flight(rng, cfg, length);
    data.add_episode(s.raw, s.ca);
  }
  return data;
}

}  // namespace synthetic

#endif  // SCALENAV_TESTS_SYNTHETIC_HPP_
