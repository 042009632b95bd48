#pragma once

#include <Eigen/Core>
#include <deque>
#include <future>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/environment.hpp"
#include "scnav/geometry.hpp"
#include "scnav/nn/gaussian.hpp"
#include "scnav/nn/networks.hpp"
#include "scnav/random.hpp"
#include "scnav/world.hpp"

namespace scnav {

/// Everything an episode needs besides the scene itself.
struct EpisodeParams {
  double dt = 0.1;
  VelocityLimits limits;
  SensorModel sensor;
  Thresholds thresholds;
  int n_ped = 3;
  int max_steps = 1000;
  double scn_probability = 0.5;
  /// Minimum initial robot-companion separation along the played trajectory.
  double companion_min_start = 0.6;
  /// Constant distance of the synthesized companion outside SCN mode.
  double synth_companion_d = 0.8;
};

/// One sampled navigation task: which trajectory the robot plays, where it
/// starts and must go, and whether a real companion walks along.
struct Scenario {
  int env_index = 0;
  int traj_id = 0;
  Pose2D start;
  Eigen::Vector2d goal{0.0, 0.0};
  bool scn_mode = false;
  int companion_start_index = 0;  // index into the played trajectory (SCN only)
  std::vector<int> pedestrian_ids;
};

/// Draws a scenario: uniform environment (among those with candidates),
/// uniform companion candidate, SCN mode with the configured probability.
/// The robot starts at the trajectory head, aimed straight at the goal.
inline Scenario sample_scenario(const std::vector<EnvironmentSpec>& envs,
                                const EpisodeParams& params, RngStream& rng) {
  std::vector<int> eligible;
  for (std::size_t i = 0; i < envs.size(); ++i) {
    if (!envs[i].companion_candidates.empty()) eligible.push_back(static_cast<int>(i));
  }
  if (eligible.empty()) {
    throw std::runtime_error("sample_scenario: no environment has a companion candidate");
  }

  Scenario sc;
  sc.env_index = eligible[rng.uniform_index(eligible.size())];
  const EnvironmentSpec& env = envs[static_cast<std::size_t>(sc.env_index)];
  sc.traj_id = env.companion_candidates[rng.uniform_index(env.companion_candidates.size())];
  sc.scn_mode = rng.bernoulli(params.scn_probability);

  const Trajectory* traj = env.find(sc.traj_id);
  const Eigen::Vector2d start = traj->points.front();
  sc.goal = traj->points.back();
  const Eigen::Vector2d to_goal = sc.goal - start;
  const double heading = (to_goal.norm() > 0.0) ? std::atan2(to_goal.y(), to_goal.x()) : 0.0;
  sc.start = {start.x(), start.y(), heading};

  if (sc.scn_mode) {
    // First trajectory index sufficiently far from the robot's start; the
    // companion walks the rest of the played recording from there.
    const int last = static_cast<int>(traj->points.size()) - 1;
    int t0 = last;
    for (int i = 0; i <= last; ++i) {
      if ((traj->points[static_cast<std::size_t>(i)] - start).norm() >=
          params.companion_min_start) {
        t0 = i;
        break;
      }
    }
    sc.companion_start_index = std::min(t0, last - 1);
  }

  for (const auto& t : env.trajectories) {
    if (t.id != sc.traj_id) sc.pedestrian_ids.push_back(t.id);
  }
  return sc;
}

/// Replay-driven world: steps the robot under commands while the companion
/// and pedestrians follow their recordings, and exposes the true state and
/// noisy observation at the current instant.
class EpisodeSim {
 public:
  EpisodeSim(const EnvironmentSpec& env, const Scenario& sc, const EpisodeParams& params)
      : env_(&env), sc_(&sc), params_(&params) {
    traj_ = env.find(sc.traj_id);
    if (!traj_) {
      throw std::runtime_error("EpisodeSim: trajectory " + std::to_string(sc.traj_id) +
                               " not in environment " + env.name);
    }
    for (int id : sc.pedestrian_ids) {
      const Trajectory* t = env.find(id);
      if (!t) throw std::runtime_error("EpisodeSim: unknown pedestrian id");
      peds_.push_back(t);
    }
    pose_ = sc.start;
    rebuild();
  }

  int t() const { return t_; }
  const Pose2D& pose() const { return pose_; }
  const WorldState& state() const { return state_; }
  const EnvironmentSpec& environment() const { return *env_; }
  const Scenario& scenario() const { return *sc_; }
  const std::vector<Eigen::Vector2d>& obstacle_points() const { return points_; }

  /// World position of the companion (actual in SCN, synthesized otherwise).
  const Eigen::Vector2d& companion_world() const { return com_world_; }

  /// World positions of the real pedestrians present at the current frame.
  const std::vector<Eigen::Vector2d>& present_pedestrians() const { return present_peds_; }

  /// Trajectory ids matching present_pedestrians(), index for index.
  const std::vector<int>& present_pedestrian_ids() const { return present_ped_ids_; }

  /// World positions of the pedestrians occupying the p_ped slots (dummies
  /// excluded).
  std::vector<Eigen::Vector2d> tracked_pedestrians() const {
    return {ped_slots_.begin(), ped_slots_.begin() + real_slots_};
  }

  Observation observe(RngStream& rng) const {
    Observation o;
    o.goal_d = state_.goal_d;
    o.goal_phi = state_.goal_phi;
    o.action = state_.action;
    o.peds = observe_peds(state_.peds, params_->sensor, rng);
    // The synthesized companion defines its own observation; no noise.
    o.companion = sc_->scn_mode ? observe_com(state_.companion, params_->sensor, rng)
                                : state_.companion;
    o.obstacles = observe_obs(pose_, points_, params_->sensor, rng);
    return o;
  }

  void advance(const VelocityCommand& cmd) {
    pose_ = step_pose(pose_, cmd, params_->dt);
    cmd_ = cmd;
    ++t_;
    rebuild();
  }

  TerminationCause termination() const {
    return check_termination(state_, params_->thresholds, sc_->scn_mode);
  }

 private:
  void rebuild() {
    const int frame = traj_->first_frame + t_;
    present_peds_.clear();
    present_ped_ids_.clear();
    for (const Trajectory* p : peds_) {
      if (auto pos = p->position_at(frame)) {
        present_peds_.push_back(*pos);
        present_ped_ids_.push_back(p->id);
      }
    }

    const PolarPoint goal = relative_polar(pose_, sc_->goal);
    state_.goal_d = goal.d;
    state_.goal_phi = goal.phi;
    state_.action = cmd_;

    PedSnapshot snap = compute_p_ped(pose_, present_peds_, params_->n_ped, env_->grid);
    state_.peds = std::move(snap.polar);
    ped_slots_ = std::move(snap.positions);
    real_slots_ = snap.real_count;

    if (sc_->scn_mode) {
      const int idx = sc_->companion_start_index + t_;
      com_world_ = *traj_->position_at(traj_->first_frame + idx);
      state_.companion = relative_polar(pose_, com_world_);
    } else {
      state_.companion = {params_->synth_companion_d, state_.goal_phi};
      const double a = pose_.heading + state_.goal_phi;
      com_world_ = pose_.position() +
                   params_->synth_companion_d * Eigen::Vector2d(std::cos(a), std::sin(a));
    }

    points_ = obstacle_points_near(env_->grid, pose_, params_->sensor.obstacle_horizon);
    state_.obstacles =
        compute_p_obs(pose_, points_, params_->sensor.front_halfwidth,
                      params_->sensor.obstacle_horizon);
  }

  const EnvironmentSpec* env_;
  const Scenario* sc_;
  const EpisodeParams* params_;
  const Trajectory* traj_ = nullptr;
  std::vector<const Trajectory*> peds_;

  Pose2D pose_;
  VelocityCommand cmd_;
  int t_ = 0;
  WorldState state_;
  std::vector<Eigen::Vector2d> points_;
  std::vector<Eigen::Vector2d> present_peds_;
  std::vector<int> present_ped_ids_;
  std::vector<Eigen::Vector2d> ped_slots_;
  int real_slots_ = 0;
  Eigen::Vector2d com_world_{0.0, 0.0};
};

/// What a controller decided for one step. `raw` is the unclamped action
/// sample (densities are evaluated there); `exec` is what the robot runs.
struct StepDecision {
  Eigen::Vector2d raw{0.0, 0.0};
  VelocityCommand exec;
  Eigen::Vector2d mu{0.0, 0.0};
  double log_prob = 0.0;
};

struct Transition {
  Observation obs;
  WorldState state;
  Eigen::VectorXd obs_input;    // scaled policy input
  Eigen::VectorXd state_input;  // scaled value input
  Eigen::Vector2d action_raw{0.0, 0.0};
  VelocityCommand action_exec;
  Eigen::Vector2d mu{0.0, 0.0};
  double log_prob = 0.0;
  double reward = 0.0;
  bool terminal = false;
  bool episode_start = false;
};

struct Episode {
  Scenario scenario;
  std::vector<Transition> steps;
  TerminationCause cause = TerminationCause::None;
  bool truncated = false;
  WorldState final_state;
  Eigen::VectorXd final_state_input;
  // World-frame tracks at each step start, for export and plotting.
  std::vector<Pose2D> poses;
  std::vector<Eigen::Vector2d> companion_track;
  std::vector<std::vector<Eigen::Vector2d>> ped_tracks;

  double total_reward() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.reward;
    return r;
  }

  double discounted_return(double gamma) const {
    double r = 0.0;
    double g = 1.0;
    for (const auto& s : steps) {
      r += g * s.reward;
      g *= gamma;
    }
    return r;
  }
};

/// Runs one episode under an arbitrary controller. Per step: build the state
/// and observation, let the controller act, advance the robot and the replay,
/// then check termination on the new true state. Hitting the step cap leaves
/// the episode truncated (no terminal reward; the final state is kept for
/// value bootstrapping).
template <class Controller>
Episode run_episode(const EnvironmentSpec& env, const Scenario& sc, const EpisodeParams& params,
                    Controller&& controller, RngStream& rng) {
  if (params.max_steps < 1) throw std::invalid_argument("run_episode: max_steps must be >= 1");
  EpisodeSim sim(env, sc, params);
  Episode ep;
  ep.scenario = sc;
  for (int step = 0; step < params.max_steps; ++step) {
    const WorldState s = sim.state();
    const Observation o = sim.observe(rng);
    ep.poses.push_back(sim.pose());
    ep.companion_track.push_back(sim.companion_world());
    ep.ped_tracks.push_back(sim.tracked_pedestrians());

    const StepDecision dec = controller(o, sim, rng);
    sim.advance(dec.exec);
    const TerminationCause cause = sim.termination();

    Transition tr;
    tr.obs = o;
    tr.state = s;
    tr.obs_input = scale_for_net(o, params.sensor, params.limits);
    tr.state_input = scale_for_net(s, params.sensor, params.limits);
    tr.action_raw = dec.raw;
    tr.action_exec = dec.exec;
    tr.mu = dec.mu;
    tr.log_prob = dec.log_prob;
    tr.reward = reward(cause, dec.exec.v_r);
    tr.terminal = cause != TerminationCause::None;
    tr.episode_start = (step == 0);
    ep.steps.push_back(std::move(tr));

    if (cause != TerminationCause::None) {
      ep.cause = cause;
      break;
    }
  }
  ep.truncated = (ep.cause == TerminationCause::None);
  ep.final_state = sim.state();
  ep.final_state_input = scale_for_net(ep.final_state, params.sensor, params.limits);
  return ep;
}

/// Controller wrapping the recurrent Gaussian policy: scale the observation,
/// advance the recurrence, sample, clamp for execution but keep the raw
/// sample for the density.
class PolicyController {
 public:
  PolicyController(const nn::GaussianPolicy& policy, double sigma, const EpisodeParams& params)
      : policy_(&policy), sigma_(sigma), params_(&params), state_(policy.initial_state()) {}

  StepDecision operator()(const Observation& o, const EpisodeSim&, RngStream& rng) {
    const Eigen::VectorXd input = scale_for_net(o, params_->sensor, params_->limits);
    const Eigen::Vector2d mu = policy_->step(input, state_);
    const Eigen::Vector2d a = nn::sample_action(mu, sigma_, rng);
    StepDecision dec;
    dec.raw = a;
    dec.exec = clamp_command({a.x(), a.y()}, params_->limits);
    dec.mu = mu;
    dec.log_prob = nn::log_prob(mu, sigma_, a);
    return dec;
  }

 private:
  const nn::GaussianPolicy* policy_;
  double sigma_;
  const EpisodeParams* params_;
  nn::GaussianPolicy::RecurrentState state_;
};

inline Episode run_policy_episode(const EnvironmentSpec& env, const Scenario& sc,
                                  const EpisodeParams& params, const nn::GaussianPolicy& policy,
                                  double sigma, RngStream& rng) {
  return run_episode(env, sc, params, PolicyController(policy, sigma, params), rng);
}

struct EpisodeBatch {
  std::vector<Episode> episodes;
  long total_steps = 0;
};

/// Collects whole episodes until the step budget is met. Episode k is fully
/// determined by (seed, iteration, k), so the batch content is identical for
/// any worker count; workers only precompute upcoming indices.
inline EpisodeBatch collect_batch(const std::vector<EnvironmentSpec>& envs,
                                  const nn::GaussianPolicy& policy, double sigma,
                                  const EpisodeParams& params, std::uint64_t seed,
                                  std::uint64_t iteration, long min_steps, int workers = 1) {
  if (min_steps < 1) throw std::invalid_argument("collect_batch: batch size must be >= 1");
  auto make = [&](std::uint64_t index) {
    RngStream rng = RngStream::derive(seed, iteration, index);
    const Scenario sc = sample_scenario(envs, params, rng);
    return run_policy_episode(envs[static_cast<std::size_t>(sc.env_index)], sc, params, policy,
                              sigma, rng);
  };

  EpisodeBatch batch;
  std::uint64_t next_index = 0;
  if (workers <= 1) {
    while (batch.total_steps < min_steps) {
      batch.episodes.push_back(make(next_index++));
      batch.total_steps += static_cast<long>(batch.episodes.back().steps.size());
    }
    return batch;
  }

  std::deque<std::future<Episode>> pending;
  while (batch.total_steps < min_steps) {
    while (pending.size() < static_cast<std::size_t>(workers)) {
      pending.push_back(std::async(std::launch::async, make, next_index++));
    }
    batch.episodes.push_back(pending.front().get());
    pending.pop_front();
    batch.total_steps += static_cast<long>(batch.episodes.back().steps.size());
  }
  for (auto& f : pending) f.wait();  // discard lookahead overshoot
  return batch;
}

/// Episode export: one CSV line per step with the robot pose at the step
/// start, the executed command, the reward, the termination cause, and the
/// companion/pedestrian world positions. Unused pedestrian slots are `nan`.
inline std::string episode_csv_header(int n_ped) {
  std::string h = "episode_id,t,x,y,heading,v_T,v_R,reward,cause,com_x,com_y";
  for (int i = 1; i <= n_ped; ++i) {
    h += ",ped" + std::to_string(i) + "_x,ped" + std::to_string(i) + "_y";
  }
  return h;
}

inline void write_episode_csv(std::ostream& out, const Episode& ep, int episode_id, int n_ped) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    const Transition& tr = ep.steps[t];
    const Pose2D& pose = ep.poses[t];
    const bool last = (t + 1 == ep.steps.size());
    os << episode_id << ',' << t << ',' << pose.x << ',' << pose.y << ',' << pose.heading << ','
       << tr.action_exec.v_t << ',' << tr.action_exec.v_r << ',' << tr.reward << ','
       << (last ? to_string(ep.cause) : to_string(TerminationCause::None)) << ','
       << ep.companion_track[t].x() << ',' << ep.companion_track[t].y();
    const auto& peds = ep.ped_tracks[t];
    for (int i = 0; i < n_ped; ++i) {
      if (i < static_cast<int>(peds.size())) {
        os << ',' << peds[static_cast<std::size_t>(i)].x() << ','
           << peds[static_cast<std::size_t>(i)].y();
      } else {
        os << ",nan,nan";
      }
    }
    os << '\n';
  }
  out << os.str();
}

}  // namespace scnav
