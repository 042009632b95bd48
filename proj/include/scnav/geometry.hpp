#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scnav {

constexpr double kPi = 3.14159265358979323846;

/// Reduces an angle to the canonical interval (-pi, pi].
inline double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::domain_error("wrap_angle: angle must be finite");
  }
  double r = std::fmod(theta + kPi, 2.0 * kPi);
  if (r <= 0.0) {
    r += 2.0 * kPi;
  }
  return r - kPi;
}

/// Planar configuration of a synchro-drive robot. Heading stays in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Eigen::Vector2d position() const { return {x, y}; }
};

/// Action of the robot: translational speed (m/s) and rotational rate (rad/s).
struct VelocityCommand {
  double v_t = 0.0;
  double v_r = 0.0;
};

struct VelocityLimits {
  double v_t_max = 0.7;
  double v_r_max = kPi / 3.0;
};

inline VelocityCommand clamp_command(const VelocityCommand& cmd, const VelocityLimits& lim) {
  return {std::clamp(cmd.v_t, 0.0, lim.v_t_max),
          std::clamp(cmd.v_r, -lim.v_r_max, lim.v_r_max)};
}

/// Turn rates below this magnitude are integrated as straight-line motion;
/// keeps the arc equations away from the division blow-up at v_r = 0 while
/// the branch mismatch stays under 1e-6 m.
constexpr double kMinTurnRate = 1e-6;

/// Circular-arc pose update under constant velocities. Requires v_r != 0.
inline Pose2D step_pose_arc(const Pose2D& pose, const VelocityCommand& cmd, double dt) {
  const double phi = pose.heading;
  const double phi_new = phi + cmd.v_r * dt;
  Pose2D out;
  out.x = pose.x - cmd.v_t / cmd.v_r * (std::sin(phi) - std::sin(phi_new));
  out.y = pose.y + cmd.v_t / cmd.v_r * (std::cos(phi) - std::cos(phi_new));
  out.heading = wrap_angle(phi_new);
  return out;
}

/// Straight-line pose update; the zero-turn-rate limit of the arc branch.
inline Pose2D step_pose_straight(const Pose2D& pose, const VelocityCommand& cmd, double dt) {
  Pose2D out;
  out.x = pose.x + cmd.v_t * std::cos(pose.heading) * dt;
  out.y = pose.y + cmd.v_t * std::sin(pose.heading) * dt;
  out.heading = wrap_angle(pose.heading + cmd.v_r * dt);
  return out;
}

inline Pose2D step_pose(const Pose2D& pose, const VelocityCommand& cmd, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("step_pose: dt must be positive");
  }
  return std::abs(cmd.v_r) > kMinTurnRate ? step_pose_arc(pose, cmd, dt)
                                          : step_pose_straight(pose, cmd, dt);
}

/// Distance and bearing of a point, measured in the robot frame.
struct PolarPoint {
  double d = 0.0;
  double phi = 0.0;
};

/// Polar coordinates of a world point relative to the robot pose. A point
/// coincident with the robot maps to (0, 0).
inline PolarPoint relative_polar(const Pose2D& pose, const Eigen::Vector2d& point) {
  const double dx = point.x() - pose.x;
  const double dy = point.y() - pose.y;
  const double d = std::hypot(dx, dy);
  if (d == 0.0) {
    return {0.0, 0.0};
  }
  return {d, wrap_angle(std::atan2(dy, dx) - pose.heading)};
}

}  // namespace scnav
