// SPDX-License-Identifier: Apache-2.0

#include "scalenav/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace scalenav::dynamics {

Vec3 UavState::body_velocity() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * velocity.x + s * velocity.y, -s * velocity.x + c * velocity.y, velocity.z};
}

bool UavState::finite() const {
  return position.finite() && velocity.finite() && std::isfinite(yaw) &&
         std::isfinite(yaw_rate);
}

void DynamicsConfig::validate() const {
  if (!(dt > 0.0 && a_max > 0.0 && v_cap > 0.0 && yaw_rate_max > 0.0)) {
    throw InvalidArgument("dynamics limits must all be positive");
  }
}

Action clamp_action(const Action& a, const DynamicsConfig& cfg) {
  return {std::clamp(a.a_x, -cfg.a_max, cfg.a_max), std::clamp(a.a_y, -cfg.a_max, cfg.a_max),
          std::clamp(a.a_z, -cfg.a_max, cfg.a_max),
          std::clamp(a.v_yaw, -cfg.yaw_rate_max, cfg.yaw_rate_max)};
}

UavState step(const UavState& state, const Action& action, const DynamicsConfig& cfg) {
  const Action a = clamp_action(action, cfg);
  UavState next = state;
  next.velocity = state.velocity + Vec3{a.a_x, a.a_y, a.a_z} * cfg.dt;
  const double speed = next.velocity.norm();
  if (speed > cfg.v_cap) next.velocity = next.velocity * (cfg.v_cap / speed);
  next.position = state.position + next.velocity * cfg.dt;
  next.yaw_rate = a.v_yaw;
  next.yaw = wrap_angle(state.yaw + next.yaw_rate * cfg.dt);
  return next;
}

}  // namespace scalenav::dynamics
