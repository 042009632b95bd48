#pragma once

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/episode.hpp"
#include "scnav/nn/gaussian.hpp"
#include "scnav/rvo.hpp"
#include "scnav/trpo.hpp"

namespace scnav {

/// Every runtime knob of the stack, loadable from a flat `key = value` file.
struct RunConfig {
  std::vector<std::string> train_scenes;
  std::vector<std::string> eval_scenes;

  std::vector<int> feature_units{256, 64};
  int lstm_units = 64;
  std::vector<int> value_units{256, 64, 16};

  nn::SigmaSchedule sigma;
  TrpoConfig trpo;
  EpisodeParams episode;
  RvoParams rvo;
  TrainSettings train;

  bool deterministic = true;
  int eval_trials = 300;
  std::string eval_mode = "scn";  // "scn" or "social"
  double wanderer_threshold = 1.0;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v, double lo, double hi) {
  double x = 0.0;
  try {
    std::size_t pos = 0;
    x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": not a number: '" + v + "'");
  }
  if (!(x >= lo && x <= hi)) {
    std::ostringstream os;
    os << "config: " << key << " = " << v << " outside [" << lo << ", " << hi << "]";
    throw std::runtime_error(os.str());
  }
  return x;
}

inline long parse_int(const std::string& key, const std::string& v, long lo, long hi) {
  long x = 0;
  try {
    std::size_t pos = 0;
    x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": not an integer: '" + v + "'");
  }
  if (x < lo || x > hi) {
    throw std::runtime_error("config: " + key + " = " + v + " outside [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: " + key + ": expected true/false: '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v, long lo,
                                       long hi) {
  std::vector<int> out;
  for (const auto& tok : split_list(v)) {
    out.push_back(static_cast<int>(parse_int(key, tok, lo, hi)));
  }
  if (out.empty()) throw std::runtime_error("config: " + key + ": empty list");
  return out;
}

}  // namespace detail

/// Applies one `key = value` assignment with type and range validation;
/// unknown keys are rejected.
inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_int_list;
  using detail::split_list;

  static const double kBigD = 1e9;
  if (key == "train_scenes") c.train_scenes = split_list(value);
  else if (key == "eval_scenes") c.eval_scenes = split_list(value);
  else if (key == "feature_units") c.feature_units = parse_int_list(key, value, 1, 4096);
  else if (key == "lstm_units") c.lstm_units = static_cast<int>(parse_int(key, value, 1, 4096));
  else if (key == "value_units") c.value_units = parse_int_list(key, value, 1, 4096);
  else if (key == "sigma_start") c.sigma.start = parse_double(key, value, 1e-6, 10.0);
  else if (key == "sigma_end") c.sigma.end = parse_double(key, value, 1e-6, 10.0);
  else if (key == "sigma_decay_iters") c.sigma.decay_iters = static_cast<int>(parse_int(key, value, 1, 1000000));
  else if (key == "gamma") c.trpo.gamma = parse_double(key, value, 1e-6, 1.0);
  else if (key == "lambda") c.trpo.lambda = parse_double(key, value, 0.0, 1.0);
  else if (key == "epsilon_scale") c.trpo.epsilon_scale = parse_double(key, value, 1e-9, 100.0);
  else if (key == "epsilon1") c.trpo.epsilon1 = parse_double(key, value, 1e-9, kBigD);
  else if (key == "cg_iters") c.trpo.cg_iters = static_cast<int>(parse_int(key, value, 1, 10000));
  else if (key == "cg_damping") c.trpo.cg_damping = parse_double(key, value, 0.0, kBigD);
  else if (key == "cg_tol") c.trpo.cg_tol = parse_double(key, value, 0.0, 1.0);
  else if (key == "line_search_backtracks") c.trpo.line_search_backtracks = static_cast<int>(parse_int(key, value, 0, 100));
  else if (key == "value_passes") c.trpo.value_passes = static_cast<int>(parse_int(key, value, 0, 10000));
  else if (key == "normalize_advantages") c.trpo.normalize_advantages = parse_bool(key, value);
  else if (key == "dt") c.episode.dt = parse_double(key, value, 1e-6, 10.0);
  else if (key == "v_t_max") c.episode.limits.v_t_max = parse_double(key, value, 1e-6, 100.0);
  else if (key == "v_r_max") c.episode.limits.v_r_max = parse_double(key, value, 1e-6, 100.0);
  else if (key == "n_ped") c.episode.n_ped = static_cast<int>(parse_int(key, value, 1, 100));
  else if (key == "max_steps") c.episode.max_steps = static_cast<int>(parse_int(key, value, 1, 10000000));
  else if (key == "scn_probability") c.episode.scn_probability = parse_double(key, value, 0.0, 1.0);
  else if (key == "companion_min_start") c.episode.companion_min_start = parse_double(key, value, 0.0, kBigD);
  else if (key == "synth_companion_d") c.episode.synth_companion_d = parse_double(key, value, 0.0, kBigD);
  else if (key == "fov_ped_max") c.episode.sensor.ped_fov.phi_max = parse_double(key, value, 0.0, kPi);
  else if (key == "fov_ped_min") c.episode.sensor.ped_fov.phi_min = parse_double(key, value, -kPi, 0.0);
  else if (key == "fov_obs_max") c.episode.sensor.obs_fov.phi_max = parse_double(key, value, 0.0, kPi);
  else if (key == "fov_obs_min") c.episode.sensor.obs_fov.phi_min = parse_double(key, value, -kPi, 0.0);
  else if (key == "d_ped_max") c.episode.sensor.ped_fov.range = parse_double(key, value, 1e-3, kBigD);
  else if (key == "d_obs_max") c.episode.sensor.obs_fov.range = parse_double(key, value, 1e-3, kBigD);
  else if (key == "obstacle_horizon") c.episode.sensor.obstacle_horizon = parse_double(key, value, 1e-3, kBigD);
  else if (key == "eps_rho") c.episode.sensor.front_halfwidth = parse_double(key, value, 1e-6, kPi);
  else if (key == "noise_ped") c.episode.sensor.ped_noise = parse_double(key, value, 0.0, 10.0);
  else if (key == "noise_com") c.episode.sensor.com_noise = parse_double(key, value, 0.0, 10.0);
  else if (key == "noise_obs") c.episode.sensor.obs_noise = parse_double(key, value, 0.0, 10.0);
  else if (key == "goal_radius") c.episode.thresholds.goal = parse_double(key, value, 0.0, kBigD);
  else if (key == "ped_collision_dist") c.episode.thresholds.ped_collision = parse_double(key, value, 0.0, kBigD);
  else if (key == "com_collision_dist") c.episode.thresholds.com_collision = parse_double(key, value, 0.0, kBigD);
  else if (key == "obs_collision_dist") c.episode.thresholds.obs_collision = parse_double(key, value, 0.0, kBigD);
  else if (key == "stray_dist") c.episode.thresholds.stray = parse_double(key, value, 0.0, kBigD);
  else if (key == "batch_size") c.train.batch_size = parse_int(key, value, 1, 100000000);
  else if (key == "iterations") c.train.iterations = static_cast<int>(parse_int(key, value, 0, 10000000));
  else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(parse_int(key, value, 0, std::numeric_limits<long>::max()));
  else if (key == "workers") c.train.workers = static_cast<int>(parse_int(key, value, 1, 1024));
  else if (key == "checkpoint_every") c.train.checkpoint_every = static_cast<int>(parse_int(key, value, 1, 10000000));
  else if (key == "deterministic") c.deterministic = parse_bool(key, value);
  else if (key == "eval_trials") c.eval_trials = static_cast<int>(parse_int(key, value, 1, 10000000));
  else if (key == "eval_mode") {
    if (value != "scn" && value != "social") {
      throw std::runtime_error("config: eval_mode must be 'scn' or 'social'");
    }
    c.eval_mode = value;
  }
  else if (key == "wanderer_threshold") c.wanderer_threshold = parse_double(key, value, 0.0, kBigD);
  else if (key == "rvo_candidates") c.rvo.candidates = static_cast<int>(parse_int(key, value, 1, 1000000));
  else if (key == "rvo_ttc_weight") c.rvo.ttc_weight = parse_double(key, value, 0.0, kBigD);
  else if (key == "rvo_agent_radius") c.rvo.agent_radius = parse_double(key, value, 1e-6, kBigD);
  else if (key == "rvo_heading_gain") c.rvo.heading_gain = parse_double(key, value, 0.0, kBigD);
  else if (key == "rvo_obstacle_radius") c.rvo.obstacle_radius = parse_double(key, value, 1e-3, kBigD);
  else if (key == "rvo_max_speed") c.rvo.max_speed = parse_double(key, value, 1e-6, 100.0);
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

/// Cross-field checks applied after all assignments.
inline void validate_config(const RunConfig& c) {
  if (c.episode.sensor.ped_fov.phi_min >= c.episode.sensor.ped_fov.phi_max ||
      c.episode.sensor.obs_fov.phi_min >= c.episode.sensor.obs_fov.phi_max) {
    throw std::runtime_error("config: FoV must satisfy phi_min < phi_max");
  }
  if (c.sigma.end > c.sigma.start) {
    throw std::runtime_error("config: sigma_end must not exceed sigma_start");
  }
  if (c.episode.thresholds.goal <= 0.0) {
    throw std::runtime_error("config: goal_radius must be positive");
  }
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  RunConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trimmed(line.substr(0, eq));
    const std::string value = detail::trimmed(line.substr(eq + 1));
    try {
      apply_config_value(c, key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_config(c);
  return c;
}

}  // namespace scnav
