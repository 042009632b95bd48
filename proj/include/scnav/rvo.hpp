#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "scnav/episode.hpp"
#include "scnav/geometry.hpp"
#include "scnav/random.hpp"
#include "scnav/world.hpp"

namespace scnav {

struct RvoParams {
  /// Number of velocity candidates sampled uniformly in the speed disk.
  int candidates = 200;
  /// Weight of the time-to-collision penalty term (s*m).
  double ttc_weight = 1.0;
  double agent_radius = 0.2;
  /// Proportional gain mapping heading error to turn rate.
  double heading_gain = 2.0;
  /// Radius around the robot within which obstacle cells are handed to the
  /// planner (perfect knowledge inside it).
  double obstacle_radius = 4.0;
  double max_speed = 0.7;
};

/// A holonomic disk agent as the planner sees it.
struct AgentDisk {
  Eigen::Vector2d position{0.0, 0.0};
  Eigen::Vector2d velocity{0.0, 0.0};
  double radius = 0.2;
  double pref_speed = 0.7;
  Eigen::Vector2d goal{0.0, 0.0};
};

/// First time two disks of combined radius `radius` meet, given relative
/// position and relative velocity; zero when already overlapping, infinity
/// when they never meet.
inline double time_to_collision(const Eigen::Vector2d& rel_pos, const Eigen::Vector2d& rel_vel,
                                double radius) {
  const double c = rel_pos.squaredNorm() - radius * radius;
  if (c <= 0.0) return 0.0;
  const double a = rel_vel.squaredNorm();
  const double b = -2.0 * rel_pos.dot(rel_vel);
  if (a <= 0.0) return std::numeric_limits<double>::infinity();
  const double disc = b * b - 4.0 * a * c;
  if (disc <= 0.0) return std::numeric_limits<double>::infinity();
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  return t >= 0.0 ? t : std::numeric_limits<double>::infinity();
}

inline Eigen::Vector2d preferred_velocity(const AgentDisk& self, double dt) {
  const Eigen::Vector2d to_goal = self.goal - self.position;
  const double dist = to_goal.norm();
  if (dist < 1e-12) return {0.0, 0.0};
  return to_goal / dist * std::min(self.pref_speed, dist / dt);
}

/// Picks the candidate minimizing w/ttc + |candidate - v_pref|. Candidates
/// are tested reciprocally against other agents (the agent moves to
/// 2*candidate - v_self, assuming the other takes half the avoidance effort)
/// and directly against static obstacle points. If every candidate collides
/// immediately, the one with the largest time to collision wins.
inline Eigen::Vector2d rvo_step_candidates(const AgentDisk& self,
                                           const std::vector<AgentDisk>& others,
                                           const std::vector<Eigen::Vector2d>& obstacles,
                                           double dt, const RvoParams& prm,
                                           const std::vector<Eigen::Vector2d>& candidates) {
  if (!(dt > 0.0)) throw std::invalid_argument("rvo_step: dt must be positive");
  const Eigen::Vector2d v_pref = preferred_velocity(self, dt);

  double best_penalty = std::numeric_limits<double>::infinity();
  double best_ttc = -1.0;
  Eigen::Vector2d best = v_pref;
  Eigen::Vector2d best_by_ttc = v_pref;
  for (const Eigen::Vector2d& cand : candidates) {
    double ttc = std::numeric_limits<double>::infinity();
    const Eigen::Vector2d v_recip = 2.0 * cand - self.velocity;
    for (const AgentDisk& other : others) {
      ttc = std::min(ttc, time_to_collision(other.position - self.position,
                                            v_recip - other.velocity,
                                            self.radius + other.radius));
    }
    for (const Eigen::Vector2d& obs : obstacles) {
      ttc = std::min(ttc, time_to_collision(obs - self.position, cand, self.radius));
    }
    const double penalty = (ttc > 0.0 ? prm.ttc_weight / ttc : std::numeric_limits<double>::infinity()) +
                           (cand - v_pref).norm();
    if (penalty < best_penalty) {
      best_penalty = penalty;
      best = cand;
    }
    if (ttc > best_ttc) {
      best_ttc = ttc;
      best_by_ttc = cand;
    }
  }
  return std::isfinite(best_penalty) ? best : best_by_ttc;
}

/// Sampling variant: the preferred velocity plus `candidates` draws uniform
/// in the max-speed disk.
inline Eigen::Vector2d rvo_step(const AgentDisk& self, const std::vector<AgentDisk>& others,
                                const std::vector<Eigen::Vector2d>& obstacles, double dt,
                                const RvoParams& prm, RngStream& rng) {
  std::vector<Eigen::Vector2d> candidates;
  candidates.reserve(static_cast<std::size_t>(prm.candidates) + 1);
  candidates.push_back(preferred_velocity(self, dt));
  for (int i = 0; i < prm.candidates; ++i) {
    const double r = prm.max_speed * std::sqrt(rng.uniform());
    const double a = 2.0 * kPi * rng.uniform();
    candidates.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return rvo_step_candidates(self, others, obstacles, dt, prm, candidates);
}

/// Projects a holonomic velocity onto the synchro-drive command space:
/// forward speed along the current heading, turn rate proportional to the
/// heading error, both clamped to the robot limits.
inline VelocityCommand unicycle_project(const Eigen::Vector2d& v, const Pose2D& pose,
                                        const VelocityLimits& limits, double heading_gain) {
  const double speed = v.norm();
  if (speed < 1e-12) return {0.0, 0.0};
  const double delta = wrap_angle(std::atan2(v.y(), v.x()) - pose.heading);
  VelocityCommand cmd;
  cmd.v_t = std::clamp(speed * std::cos(delta), 0.0, limits.v_t_max);
  cmd.v_r = std::clamp(heading_gain * delta, -limits.v_r_max, limits.v_r_max);
  return cmd;
}

/// Drives the robot with the sampling RVO planner under the comparison
/// protocol: companion and pedestrian positions reach the planner with the
/// same relative range noise the learned policy observes, their velocities
/// are finite differences of those noisy positions, and obstacle cells
/// within the planning radius are known exactly.
class RvoController {
 public:
  RvoController(const EpisodeParams& params, const RvoParams& prm)
      : params_(&params), prm_(&prm) {}

  StepDecision operator()(const Observation&, const EpisodeSim& sim, RngStream& rng) {
    const Pose2D& pose = sim.pose();

    AgentDisk self;
    self.position = pose.position();
    self.velocity = sim.state().action.v_t *
                    Eigen::Vector2d(std::cos(pose.heading), std::sin(pose.heading));
    self.radius = prm_->agent_radius;
    self.pref_speed = prm_->max_speed;
    self.goal = sim.scenario().goal;

    std::vector<AgentDisk> others;
    if (sim.scenario().scn_mode) {
      // The companion keeps its own finite-difference memory; pedestrian
      // ids never collide with it.
      others.push_back(make_other(std::numeric_limits<int>::min(), sim.companion_world(), pose,
                                  params_->sensor.com_noise, rng));
    }
    const auto& peds = sim.present_pedestrians();
    const auto& ids = sim.present_pedestrian_ids();
    for (std::size_t i = 0; i < peds.size(); ++i) {
      others.push_back(make_other(ids[i], peds[i], pose, params_->sensor.ped_noise, rng));
    }

    const std::vector<Eigen::Vector2d> obstacles =
        obstacle_points_near(sim.environment().grid, pose, prm_->obstacle_radius);

    const Eigen::Vector2d v =
        rvo_step(self, others, obstacles, params_->dt, *prm_, rng);
    StepDecision dec;
    dec.exec = unicycle_project(v, pose, params_->limits, prm_->heading_gain);
    dec.raw = {dec.exec.v_t, dec.exec.v_r};
    return dec;
  }

 private:
  AgentDisk make_other(int key, const Eigen::Vector2d& true_pos, const Pose2D& robot,
                       double noise_coeff, RngStream& rng) {
    // Range noise along the true bearing, matching the sensor model.
    const PolarPoint rel = relative_polar(robot, true_pos);
    const double d_noisy = std::max(0.0, rel.d + rng.gaussian(0.0, noise_coeff * rel.d));
    const double a = robot.heading + rel.phi;
    const Eigen::Vector2d noisy =
        robot.position() + d_noisy * Eigen::Vector2d(std::cos(a), std::sin(a));

    AgentDisk agent;
    agent.position = noisy;
    agent.radius = prm_->agent_radius;
    agent.pref_speed = 0.0;
    agent.goal = noisy;
    const auto it = prev_noisy_.find(key);
    agent.velocity =
        (it != prev_noisy_.end()) ? ((noisy - it->second) / params_->dt).eval()
                                  : Eigen::Vector2d(0.0, 0.0);
    prev_noisy_[key] = noisy;
    return agent;
  }

  const EpisodeParams* params_;
  const RvoParams* prm_;
  std::map<int, Eigen::Vector2d> prev_noisy_;
};

inline Episode rvo_rollout(const EnvironmentSpec& env, const Scenario& sc,
                           const EpisodeParams& params, const RvoParams& prm, RngStream& rng) {
  return run_episode(env, sc, params, RvoController(params, prm), rng);
}

}  // namespace scnav
