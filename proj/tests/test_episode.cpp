#include <gtest/gtest.h>

#include <cmath>

#include "scnav/episode.hpp"
#include "test_util.hpp"

using namespace scnav;

namespace {

EpisodeParams quiet_params() {
  EpisodeParams p;
  p.sensor.ped_noise = p.sensor.com_noise = p.sensor.obs_noise = 0.0;
  p.max_steps = 400;
  return p;
}

nn::GaussianPolicy tiny_policy(int n_ped = 3, std::uint64_t seed = 99) {
  nn::GaussianPolicy policy(nav_vector_dim(n_ped), {8, 6}, 6);
  RngStream rng(seed);
  policy.init_weights(rng);
  return policy;
}

/// Controller driving straight ahead at a fixed speed.
struct ConstantController {
  VelocityCommand cmd;
  StepDecision operator()(const Observation&, const EpisodeSim&, RngStream&) const {
    StepDecision d;
    d.exec = cmd;
    d.raw = {cmd.v_t, cmd.v_r};
    return d;
  }
};

}  // namespace

TEST(SampleScenario, ScnModeStartsCompanionFarEnough) {
  const auto env = testutil::corridor_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 1.0;
  RngStream rng(1);
  const Scenario sc = sample_scenario({env}, p, rng);
  EXPECT_TRUE(sc.scn_mode);
  EXPECT_EQ(sc.traj_id, 1);
  const Trajectory* traj = env.find(1);
  const double d0 = (traj->points[static_cast<std::size_t>(sc.companion_start_index)] -
                     traj->points.front())
                        .norm();
  EXPECT_GE(d0, p.companion_min_start);
  EXPECT_LT(sc.companion_start_index, static_cast<int>(traj->points.size()) - 1);
  // heading chosen so the goal bearing is zero
  const PolarPoint goal = relative_polar(sc.start, sc.goal);
  EXPECT_NEAR(goal.phi, 0.0, 1e-12);
  EXPECT_EQ(sc.pedestrian_ids, (std::vector<int>{2, 3}));
}

TEST(SampleScenario, NonScnActivatesSynthesizedCompanion) {
  const auto env = testutil::goal_only_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  RngStream rng(2);
  const Scenario sc = sample_scenario({env}, p, rng);
  EXPECT_FALSE(sc.scn_mode);

  EpisodeSim sim(env, sc, p);
  EXPECT_DOUBLE_EQ(sim.state().companion.d, p.synth_companion_d);
  EXPECT_DOUBLE_EQ(sim.state().companion.phi, sim.state().goal_phi);
  EXPECT_EQ(sim.termination(), TerminationCause::None);
}

TEST(SampleScenario, EnvironmentChoiceIsUniform) {
  const std::vector<EnvironmentSpec> envs{testutil::goal_only_env(), testutil::corridor_env()};
  EpisodeParams p = quiet_params();
  RngStream rng(3);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    if (sample_scenario(envs, p, rng).env_index == 0) ++first;
  }
  EXPECT_NEAR(100.0 * first / n, 50.0, 2.0);
}

TEST(SampleScenario, ScnProbabilityRespected) {
  const auto env = testutil::corridor_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.5;
  RngStream rng(4);
  int scn = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    if (sample_scenario({env}, p, rng).scn_mode) ++scn;
  }
  EXPECT_NEAR(100.0 * scn / n, 50.0, 2.0);
}

TEST(SampleScenario, NoCandidatesIsConfigurationError) {
  auto env = testutil::goal_only_env();
  env.companion_candidates.clear();
  EpisodeParams p = quiet_params();
  RngStream rng(5);
  EXPECT_THROW(sample_scenario({env}, p, rng), std::runtime_error);
}

TEST(SynthesizedCompanion, TracksGoalBearing) {
  const auto env = testutil::goal_only_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  RngStream rng(6);
  Scenario sc = sample_scenario({env}, p, rng);
  EpisodeSim sim(env, sc, p);
  // rotate the robot; the synthesized companion must stay at (0.8, phi_g)
  sim.advance({0.0, 0.5});
  sim.advance({0.2, -0.3});
  EXPECT_DOUBLE_EQ(sim.state().companion.d, 0.8);
  EXPECT_DOUBLE_EQ(sim.state().companion.phi, sim.state().goal_phi);
  // companion-related terminations can never fire
  EXPECT_NE(sim.termination(), TerminationCause::HitCompanion);
  EXPECT_NE(sim.termination(), TerminationCause::Stray);

  Observation o = sim.observe(rng);
  EXPECT_DOUBLE_EQ(o.companion.d, 0.8);  // synthesized observation bypasses noise
  EXPECT_DOUBLE_EQ(o.companion.phi, sim.state().goal_phi);
}

TEST(RunEpisode, StartNearGoalTerminatesInOneStep) {
  auto env = testutil::goal_only_env(0.2);  // goal 0.2 m ahead
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  RngStream rng(7);
  const Scenario sc = sample_scenario({env}, p, rng);
  const Episode ep = run_episode(env, sc, p, ConstantController{{0.1, 0.0}}, rng);
  ASSERT_EQ(ep.steps.size(), 1u);
  EXPECT_EQ(ep.cause, TerminationCause::GoalReached);
  EXPECT_DOUBLE_EQ(ep.steps.back().reward, 10000.0);
  EXPECT_FALSE(ep.truncated);
}

TEST(RunEpisode, PedestriansFreezeAtLastRecordedPosition) {
  auto env = testutil::goal_only_env(6.0);
  // short pedestrian recording that ends mid-episode
  env.trajectories.push_back(testutil::line_trajectory(9, 0, {2.0, 1.0}, {2.0, 2.0}, 1.0));
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  p.max_steps = 60;
  RngStream rng(8);
  Scenario sc = sample_scenario({env}, p, rng);
  EXPECT_EQ(sc.pedestrian_ids, std::vector<int>{9});

  EpisodeSim sim(env, sc, p);
  const Trajectory* ped = env.find(9);
  const int frames = static_cast<int>(ped->points.size());
  for (int t = 0; t < 40; ++t) {
    ASSERT_EQ(sim.present_pedestrians().size(), 1u);
    const Eigen::Vector2d expect =
        (t < frames) ? ped->points[static_cast<std::size_t>(t)] : ped->points.back();
    EXPECT_EQ(sim.present_pedestrians()[0], expect);  // exact replay, no drift
    sim.advance({0.0, 0.0});
  }
}

TEST(RunEpisode, DelayedPedestrianAbsentUntilFirstFrame) {
  auto env = testutil::goal_only_env(6.0);
  env.trajectories.push_back(testutil::line_trajectory(9, 10, {2.0, 1.0}, {2.0, 2.0}, 1.0));
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  RngStream rng(9);
  Scenario sc = sample_scenario({env}, p, rng);
  EpisodeSim sim(env, sc, p);
  for (int t = 0; t < 10; ++t) {
    EXPECT_TRUE(sim.present_pedestrians().empty());
    sim.advance({0.0, 0.0});
  }
  EXPECT_EQ(sim.present_pedestrians().size(), 1u);
}

TEST(RunEpisode, MaxStepsTruncatesWithoutTerminalReward) {
  auto env = testutil::goal_only_env(6.0);
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  p.max_steps = 5;
  RngStream rng(10);
  const Scenario sc = sample_scenario({env}, p, rng);
  const Episode ep = run_episode(env, sc, p, ConstantController{{0.0, 0.1}}, rng);
  ASSERT_EQ(ep.steps.size(), 5u);
  EXPECT_EQ(ep.cause, TerminationCause::None);
  EXPECT_TRUE(ep.truncated);
  for (const auto& s : ep.steps) {
    EXPECT_DOUBLE_EQ(s.reward, -10.0 * 0.1);
    EXPECT_FALSE(s.terminal);
  }
}

TEST(RunEpisode, RewardsConsistentWithCause) {
  const auto env = testutil::corridor_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 1.0;
  const auto policy = tiny_policy();
  for (std::uint64_t k = 0; k < 20; ++k) {
    RngStream rng = RngStream::derive(5, 0, k);
    const Scenario sc = sample_scenario({env}, p, rng);
    const Episode ep = run_policy_episode(env, sc, p, policy, 0.3, rng);
    for (std::size_t i = 0; i + 1 < ep.steps.size(); ++i) {
      EXPECT_DOUBLE_EQ(ep.steps[i].reward, -10.0 * std::abs(ep.steps[i].action_exec.v_r));
      EXPECT_FALSE(ep.steps[i].terminal);
    }
    if (!ep.truncated) {
      EXPECT_DOUBLE_EQ(ep.steps.back().reward, reward(ep.cause, ep.steps.back().action_exec.v_r));
      EXPECT_TRUE(ep.steps.back().terminal);
    } else {
      EXPECT_EQ(ep.steps.size(), static_cast<std::size_t>(p.max_steps));
    }
    EXPECT_TRUE(ep.steps.front().episode_start);
    // actions are clamped into the admissible box before execution
    for (const auto& s : ep.steps) {
      EXPECT_GE(s.action_exec.v_t, 0.0);
      EXPECT_LE(s.action_exec.v_t, p.limits.v_t_max);
      EXPECT_LE(std::abs(s.action_exec.v_r), p.limits.v_r_max);
    }
  }
}

TEST(RunEpisode, ScnInitialConditionsHold) {
  const auto env = testutil::corridor_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 1.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    RngStream rng = RngStream::derive(6, 1, k);
    const Scenario sc = sample_scenario({env}, p, rng);
    EpisodeSim sim(env, sc, p);
    EXPECT_GE(sim.state().companion.d, p.companion_min_start - 1e-12);
    EXPECT_NEAR(sim.state().goal_phi, 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(sim.state().action.v_t, 0.0);
    EXPECT_DOUBLE_EQ(sim.state().action.v_r, 0.0);
  }
}

TEST(CollectBatch, MinimalBatchIsOneEpisode) {
  const auto env = testutil::goal_only_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  p.max_steps = 30;
  const auto policy = tiny_policy();
  const EpisodeBatch batch = collect_batch({env}, policy, 0.3, p, 1, 0, 1);
  EXPECT_EQ(batch.episodes.size(), 1u);
  EXPECT_GE(batch.total_steps, 1);
}

TEST(CollectBatch, ReachesRequestedSteps) {
  const auto env = testutil::goal_only_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  p.max_steps = 25;
  const auto policy = tiny_policy();
  const EpisodeBatch batch = collect_batch({env}, policy, 0.3, p, 1, 0, 200);
  EXPECT_GE(batch.total_steps, 200);
  long sum = 0;
  for (const auto& e : batch.episodes) sum += static_cast<long>(e.steps.size());
  EXPECT_EQ(sum, batch.total_steps);
  // episodes are never split: dropping the last one goes below the budget
  EXPECT_LT(batch.total_steps - static_cast<long>(batch.episodes.back().steps.size()), 200);
}

TEST(CollectBatch, WorkerCountDoesNotChangeContent) {
  const auto env = testutil::corridor_env();
  EpisodeParams p = quiet_params();
  p.max_steps = 80;
  const auto policy = tiny_policy();
  const EpisodeBatch a = collect_batch({env}, policy, 0.3, p, 7, 3, 300, 1);
  const EpisodeBatch b = collect_batch({env}, policy, 0.3, p, 7, 3, 300, 4);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  EXPECT_EQ(a.total_steps, b.total_steps);
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    ASSERT_EQ(a.episodes[e].steps.size(), b.episodes[e].steps.size());
    EXPECT_EQ(a.episodes[e].cause, b.episodes[e].cause);
    for (std::size_t i = 0; i < a.episodes[e].steps.size(); ++i) {
      EXPECT_EQ(a.episodes[e].steps[i].action_raw, b.episodes[e].steps[i].action_raw);
      EXPECT_EQ(a.episodes[e].steps[i].reward, b.episodes[e].steps[i].reward);
    }
  }
}

TEST(CollectBatch, FixedSeedIsBitReproducible) {
  const auto env = testutil::corridor_env();
  EpisodeParams p;  // noise on
  p.max_steps = 80;
  const auto policy = tiny_policy();
  const EpisodeBatch a = collect_batch({env}, policy, 0.3, p, 11, 2, 250);
  const EpisodeBatch b = collect_batch({env}, policy, 0.3, p, 11, 2, 250);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    for (std::size_t i = 0; i < a.episodes[e].steps.size(); ++i) {
      EXPECT_EQ(a.episodes[e].steps[i].obs_input, b.episodes[e].steps[i].obs_input);
      EXPECT_EQ(a.episodes[e].steps[i].action_raw, b.episodes[e].steps[i].action_raw);
    }
  }
}

TEST(EpisodeExport, FormatAndSynthesizedCompanionTrack) {
  const auto env = testutil::goal_only_env();
  EpisodeParams p = quiet_params();
  p.scn_probability = 0.0;
  p.max_steps = 10;
  RngStream rng(12);
  const Scenario sc = sample_scenario({env}, p, rng);
  const Episode ep = run_episode(env, sc, p, ConstantController{{0.5, 0.0}}, rng);

  std::ostringstream os;
  os << episode_csv_header(p.n_ped) << '\n';
  write_episode_csv(os, ep, 3, p.n_ped);
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header,
            "episode_id,t,x,y,heading,v_T,v_R,reward,cause,com_x,com_y,"
            "ped1_x,ped1_y,ped2_x,ped2_y,ped3_x,ped3_y");
  int rows = 0;
  while (std::getline(in, row)) {
    if (row.empty()) continue;
    ++rows;
    EXPECT_EQ(row.substr(0, 2), "3,");
    // no pedestrians in this scene: all slots are nan
    EXPECT_NE(row.find("nan,nan,nan,nan,nan,nan"), std::string::npos);
  }
  EXPECT_EQ(rows, static_cast<int>(ep.steps.size()));
  // the synthesized companion stays 0.8 m from the robot in every row
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    const double d = (ep.companion_track[t] - ep.poses[t].position()).norm();
    EXPECT_NEAR(d, 0.8, 1e-12);
  }
}
