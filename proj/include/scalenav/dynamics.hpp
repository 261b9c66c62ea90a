// SPDX-License-Identifier: Apache-2.0
//
// Double-integrator translation with first-order yaw, semi-implicit Euler.

#ifndef SCALENAV_DYNAMICS_HPP_
#define SCALENAV_DYNAMICS_HPP_

#include <array>

#include "scalenav/common.hpp"

namespace scalenav::dynamics {

/// Desired world-frame acceleration (m/s^2) and yaw rate (rad/s).
struct Action {
  double a_x{0.0};
  double a_y{0.0};
  double a_z{0.0};
  double v_yaw{0.0};

  std::array<double, 4> as_array() const { return {a_x, a_y, a_z, v_yaw}; }
  static Action from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
  bool operator==(const Action&) const = default;
};

struct UavState {
  Vec3 position;
  Vec3 velocity;  // world frame
  double yaw{0.0};
  double yaw_rate{0.0};

  Vec3 euler() const { return {0.0, 0.0, yaw}; }
  Vec3 omega_body() const { return {0.0, 0.0, yaw_rate}; }
  /// World velocity rotated by -yaw: (forward, left, up).
  Vec3 body_velocity() const;
  bool finite() const;
  bool operator==(const UavState&) const = default;
};

struct DynamicsConfig {
  double dt{0.1};
  double a_max{5.0};
  double v_cap{3.0};
  double yaw_rate_max{1.5};

  void validate() const;
};

Action clamp_action(const Action& a, const DynamicsConfig& cfg);

/// Clamp action; v' = clamp_norm(v + a dt); p' = p + v' dt; yaw' = wrap(yaw + rate dt).
UavState step(const UavState& state, const Action& action, const DynamicsConfig& cfg);

}  // namespace scalenav::dynamics

#endif  // SCALENAV_DYNAMICS_HPP_
