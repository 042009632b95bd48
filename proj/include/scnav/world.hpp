#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "scnav/geometry.hpp"
#include "scnav/occupancy.hpp"
#include "scnav/random.hpp"

namespace scnav {

/// Angular sector and range of a detector; targets outside it are masked.
struct SectorFov {
  double phi_max = 2.0 * kPi / 3.0;
  double phi_min = -2.0 * kPi / 3.0;
  double range = 4.0;

  bool contains(const PolarPoint& p) const {
    return p.phi >= phi_min && p.phi <= phi_max && p.d <= range;
  }
};

/// Detector limits and noise magnitudes of the simulated sensors. Noise
/// coefficients are relative: a measured distance d receives additive
/// Gaussian noise with standard deviation coeff * d.
struct SensorModel {
  SectorFov ped_fov{};
  SectorFov obs_fov{};
  double ped_noise = 0.01;
  double com_noise = 0.01;
  double obs_noise = 0.01;
  /// Half-width of the front obstacle sector (rad).
  double front_halfwidth = 0.1;
  /// Obstacles farther than this never enter the state.
  double obstacle_horizon = 4.0;
};

/// The nine-component obstacle summary: nearest obstacle ahead, then the
/// closest and farthest obstacles on the left and right sides.
struct ObstacleSummary {
  double front_d = 0.0;
  PolarPoint left_near;
  PolarPoint right_near;
  PolarPoint left_far;
  PolarPoint right_far;
};

/// Ground-truth navigation state: goal polar coordinates, executing action,
/// the nearest pedestrians (ascending by distance, padded with remote
/// dummies), the companion, and the obstacle summary.
struct WorldState {
  double goal_d = 0.0;
  double goal_phi = 0.0;
  VelocityCommand action;
  std::vector<PolarPoint> peds;
  PolarPoint companion;
  ObstacleSummary obstacles;
};

/// Sensor-limited, noisy view of a WorldState. Same layout; pedestrian
/// entries outside the field of view are masked to (range, pi).
struct Observation {
  double goal_d = 0.0;
  double goal_phi = 0.0;
  VelocityCommand action;
  std::vector<PolarPoint> peds;
  PolarPoint companion;
  ObstacleSummary obstacles;
};

inline int nav_vector_dim(int n_ped) { return 2 + 2 + 2 * n_ped + 2 + 9; }

namespace detail {

template <typename StateLike>
Eigen::VectorXd flatten_nav(const StateLike& s) {
  Eigen::VectorXd v(nav_vector_dim(static_cast<int>(s.peds.size())));
  int k = 0;
  v[k++] = s.goal_d;
  v[k++] = s.goal_phi;
  v[k++] = s.action.v_t;
  v[k++] = s.action.v_r;
  for (const auto& p : s.peds) {
    v[k++] = p.d;
    v[k++] = p.phi;
  }
  v[k++] = s.companion.d;
  v[k++] = s.companion.phi;
  const auto& o = s.obstacles;
  v[k++] = o.front_d;
  v[k++] = o.left_near.d;
  v[k++] = o.left_near.phi;
  v[k++] = o.right_near.d;
  v[k++] = o.right_near.phi;
  v[k++] = o.left_far.d;
  v[k++] = o.left_far.phi;
  v[k++] = o.right_far.d;
  v[k++] = o.right_far.phi;
  return v;
}

}  // namespace detail

inline Eigen::VectorXd flatten(const WorldState& s) { return detail::flatten_nav(s); }
inline Eigen::VectorXd flatten(const Observation& o) { return detail::flatten_nav(o); }

/// Network input scaling: distances by the matching detector range, angles by
/// pi, velocities by their bounds. Monotone and invertible, so it changes no
/// problem semantics; it only keeps tanh units away from saturation.
template <typename StateLike>
Eigen::VectorXd scale_for_net(const StateLike& s, const SensorModel& sensor,
                              const VelocityLimits& limits) {
  Eigen::VectorXd v = detail::flatten_nav(s);
  int k = 0;
  v[k++] /= sensor.obstacle_horizon;
  v[k++] /= kPi;
  v[k++] /= limits.v_t_max;
  v[k++] /= limits.v_r_max;
  for (std::size_t j = 0; j < s.peds.size(); ++j) {
    v[k++] /= sensor.ped_fov.range;
    v[k++] /= kPi;
  }
  v[k++] /= sensor.ped_fov.range;
  v[k++] /= kPi;
  for (int j = 0; j < 9; ++j) {
    // obstacle block alternates distance, angle except the lone front entry
    v[k] /= (j == 0 || j == 1 || j == 3 || j == 5 || j == 7) ? sensor.obs_fov.range : kPi;
    ++k;
  }
  return v;
}

/// Centers of occupied cells within the given radius of the pose.
inline std::vector<Eigen::Vector2d> obstacle_points_near(const OccupancyGrid& grid,
                                                         const Pose2D& pose,
                                                         double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("obstacle_points_near: radius must be positive");
  }
  std::vector<Eigen::Vector2d> out;
  const Eigen::Vector2d p = pose.position();
  for (const auto& c : grid.occupied_centers()) {
    if ((c - p).norm() <= radius) out.push_back(c);
  }
  return out;
}

struct ObstacleSelection {
  ObstacleSummary summary;
  bool front_real = false;
  bool left_near_real = false;
  bool right_near_real = false;
  bool left_far_real = false;
  bool right_far_real = false;
};

/// Partitions obstacle points into front / left / right sectors and picks the
/// per-sector extremes. Sectors with no obstacle fall back to a sentinel at
/// the limit distance (angle +-pi/2 for the sides).
inline ObstacleSelection select_obstacles(const Pose2D& pose,
                                          const std::vector<Eigen::Vector2d>& points,
                                          double front_halfwidth, double d_limit) {
  if (!(front_halfwidth > 0.0)) {
    throw std::invalid_argument("select_obstacles: front half-width must be positive");
  }
  ObstacleSelection sel;
  auto& s = sel.summary;
  s.front_d = d_limit;
  s.left_near = {d_limit, kPi / 2.0};
  s.left_far = {d_limit, kPi / 2.0};
  s.right_near = {d_limit, -kPi / 2.0};
  s.right_far = {d_limit, -kPi / 2.0};

  double left_min = std::numeric_limits<double>::infinity();
  double left_max = -1.0;
  double right_min = std::numeric_limits<double>::infinity();
  double right_max = -1.0;
  for (const auto& pt : points) {
    const PolarPoint p = relative_polar(pose, pt);
    if (std::abs(p.phi) <= front_halfwidth) {
      if (!sel.front_real || p.d < s.front_d) {
        s.front_d = p.d;
        sel.front_real = true;
      }
    } else if (p.phi > front_halfwidth) {
      if (p.d < left_min) {
        left_min = p.d;
        s.left_near = p;
        sel.left_near_real = true;
      }
      if (p.d > left_max) {
        left_max = p.d;
        s.left_far = p;
        sel.left_far_real = true;
      }
    } else {
      if (p.d < right_min) {
        right_min = p.d;
        s.right_near = p;
        sel.right_near_real = true;
      }
      if (p.d > right_max) {
        right_max = p.d;
        s.right_far = p;
        sel.right_far_real = true;
      }
    }
  }
  return sel;
}

inline ObstacleSummary compute_p_obs(const Pose2D& pose,
                                     const std::vector<Eigen::Vector2d>& points,
                                     double front_halfwidth, double d_limit) {
  return select_obstacles(pose, points, front_halfwidth, d_limit).summary;
}

/// The n nearest pedestrians in polar form together with the world positions
/// actually used. Missing slots are padded with dummies at the grid corner
/// farthest from the robot.
struct PedSnapshot {
  std::vector<PolarPoint> polar;
  std::vector<Eigen::Vector2d> positions;
  int real_count = 0;
};

inline PedSnapshot compute_p_ped(const Pose2D& pose,
                                 const std::vector<Eigen::Vector2d>& ped_positions,
                                 int n_ped, const OccupancyGrid& grid) {
  PedSnapshot snap;
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(ped_positions.size());
  for (std::size_t i = 0; i < ped_positions.size(); ++i) {
    order.emplace_back((ped_positions[i] - pose.position()).norm(), i);
  }
  std::sort(order.begin(), order.end());

  const Eigen::Vector2d p = pose.position();
  Eigen::Vector2d dummy = grid.corner_centers()[0];
  for (const auto& corner : grid.corner_centers()) {
    if ((corner - p).norm() > (dummy - p).norm()) dummy = corner;
  }

  for (int i = 0; i < n_ped; ++i) {
    if (i < static_cast<int>(order.size())) {
      const Eigen::Vector2d& pos = ped_positions[order[i].second];
      snap.polar.push_back(relative_polar(pose, pos));
      snap.positions.push_back(pos);
      ++snap.real_count;
    } else {
      snap.polar.push_back(relative_polar(pose, dummy));
      snap.positions.push_back(dummy);
    }
  }
  return snap;
}

/// Sensor view of the pedestrian list: entries inside the FoV get relative
/// Gaussian noise on the distance (clamped at zero); entries outside are
/// masked to exactly (range, pi).
inline std::vector<PolarPoint> observe_peds(const std::vector<PolarPoint>& truth,
                                            const SensorModel& sensor, RngStream& rng) {
  std::vector<PolarPoint> out;
  out.reserve(truth.size());
  for (const auto& p : truth) {
    if (sensor.ped_fov.contains(p)) {
      const double d = p.d + rng.gaussian(0.0, sensor.ped_noise * p.d);
      out.push_back({std::max(0.0, d), p.phi});
    } else {
      out.push_back({sensor.ped_fov.range, kPi});
    }
  }
  return out;
}

/// Sensor view of the obstacle summary: selection restricted to points inside
/// the obstacle FoV, relative noise on real distances, sentinel fallbacks at
/// the detector range.
inline ObstacleSummary observe_obs(const Pose2D& pose,
                                   const std::vector<Eigen::Vector2d>& points,
                                   const SensorModel& sensor, RngStream& rng) {
  std::vector<Eigen::Vector2d> visible;
  visible.reserve(points.size());
  for (const auto& pt : points) {
    if (sensor.obs_fov.contains(relative_polar(pose, pt))) visible.push_back(pt);
  }
  ObstacleSelection sel =
      select_obstacles(pose, visible, sensor.front_halfwidth, sensor.obs_fov.range);
  auto noisy = [&](double d) { return std::max(0.0, d + rng.gaussian(0.0, sensor.obs_noise * d)); };
  // Fixed draw order: front, left-near, right-near, left-far, right-far.
  auto& s = sel.summary;
  if (sel.front_real) s.front_d = noisy(s.front_d);
  if (sel.left_near_real) s.left_near.d = noisy(s.left_near.d);
  if (sel.right_near_real) s.right_near.d = noisy(s.right_near.d);
  if (sel.left_far_real) s.left_far.d = noisy(s.left_far.d);
  if (sel.right_far_real) s.right_far.d = noisy(s.right_far.d);
  return s;
}

/// Companion observation: always visible, relative noise on the distance,
/// exact bearing.
inline PolarPoint observe_com(const PolarPoint& truth, const SensorModel& sensor,
                              RngStream& rng) {
  const double d = truth.d + rng.gaussian(0.0, sensor.com_noise * truth.d);
  return {std::max(0.0, d), truth.phi};
}

enum class TerminationCause { None, GoalReached, HitPedestrian, HitCompanion, HitObstacle, Stray };

inline const char* to_string(TerminationCause c) {
  switch (c) {
    case TerminationCause::None: return "None";
    case TerminationCause::GoalReached: return "GoalReached";
    case TerminationCause::HitPedestrian: return "HitPedestrian";
    case TerminationCause::HitCompanion: return "HitCompanion";
    case TerminationCause::HitObstacle: return "HitObstacle";
    case TerminationCause::Stray: return "Stray";
  }
  return "Unknown";
}

/// Episode-ending distance thresholds (meters).
struct Thresholds {
  double goal = 0.8;
  double ped_collision = 0.4;
  double com_collision = 0.4;
  double obs_collision = 0.2;
  double stray = 2.0;
};

/// Evaluates the termination conditions on TRUE distances. Collisions take
/// precedence over straying, which takes precedence over goal reaching.
/// Companion-related checks are skipped when the companion is synthesized.
inline TerminationCause check_termination(const WorldState& truth, const Thresholds& th,
                                          bool companion_active) {
  double min_ped = std::numeric_limits<double>::infinity();
  for (const auto& p : truth.peds) min_ped = std::min(min_ped, p.d);
  if (min_ped <= th.ped_collision) return TerminationCause::HitPedestrian;
  if (companion_active && truth.companion.d <= th.com_collision) {
    return TerminationCause::HitCompanion;
  }
  const auto& o = truth.obstacles;
  if (std::min({o.front_d, o.left_near.d, o.right_near.d}) <= th.obs_collision) {
    return TerminationCause::HitObstacle;
  }
  if (companion_active && truth.companion.d >= th.stray) return TerminationCause::Stray;
  if (truth.goal_d <= th.goal) return TerminationCause::GoalReached;
  return TerminationCause::None;
}

inline double reward(TerminationCause cause, double v_r) {
  switch (cause) {
    case TerminationCause::GoalReached: return 10000.0;
    case TerminationCause::None: return -10.0 * std::abs(v_r);
    default: return -10000.0;
  }
}

}  // namespace scnav
