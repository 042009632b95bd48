#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/config.hpp"
#include "scnav/episode.hpp"
#include "scnav/environment.hpp"
#include "scnav/nn/checkpoint.hpp"
#include "scnav/rvo.hpp"
#include "scnav/trpo.hpp"

namespace scnav {

namespace detail {

// Stream tags keeping the seed spaces of unrelated commands disjoint.
constexpr std::uint64_t kInitStream = 0x17a9;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kRolloutStream = 0x5c3e;

/// Exclusive directory lock; refuses to start when another run owns the
/// output directory and removes the marker on scope exit.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    if (std::filesystem::exists(path_)) {
      throw std::runtime_error("output directory is locked by another run (remove " +
                               path_.string() + " if stale)");
    }
    std::ofstream out(path_);
    out << "locked\n";
  }

  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline std::vector<EnvironmentSpec> load_scenes(const std::vector<std::string>& manifests) {
  if (manifests.empty()) throw std::runtime_error("no scene manifests configured");
  std::vector<EnvironmentSpec> envs;
  envs.reserve(manifests.size());
  for (const auto& m : manifests) envs.push_back(load_scene_manifest(m));
  return envs;
}

inline nn::GaussianPolicy make_policy(const RunConfig& cfg) {
  return {nav_vector_dim(cfg.episode.n_ped), cfg.feature_units, cfg.lstm_units};
}

inline nn::ValueNet make_value_net(const RunConfig& cfg) {
  return {nav_vector_dim(cfg.episode.n_ped), cfg.value_units};
}

/// Validates a trajectory/map pair and writes a scene manifest. Returns the
/// printed report.
inline IngestReport cmd_ingest(const std::string& traj_path, const std::string& map_path,
                               const std::string& manifest_out, double wanderer_threshold,
                               const std::vector<int>& extra_excluded, const std::string& name,
                               std::ostream& os) {
  const IngestReport report =
      ingest_scene(traj_path, map_path, manifest_out, wanderer_threshold, extra_excluded, name);
  os << "trajectories: " << report.trajectory_count << "\n";
  os << "duration_s: min=" << report.min_duration_s << " mean=" << report.mean_duration_s
     << " max=" << report.max_duration_s << "\n";
  os << "wanderers:";
  for (int id : report.wanderer_ids) os << ' ' << id;
  os << "\n";
  os << "companion_candidates: " << report.companion_candidates.size() << "\n";
  os << "manifest: " << manifest_out << "\n";
  return report;
}

/// Trains (or resumes) and writes metrics plus periodic checkpoints under
/// `out_dir`. On error the latest state is still checkpointed.
inline void cmd_train(const RunConfig& cfg, const std::string& out_dir,
                      const std::string& resume_checkpoint = "") {
  const auto envs = load_scenes(cfg.train_scenes);
  detail::DirectoryLock lock{std::filesystem::path(out_dir)};

  nn::GaussianPolicy policy = make_policy(cfg);
  nn::ValueNet value = make_value_net(cfg);
  nn::SigmaSchedule schedule = cfg.sigma;
  std::uint32_t start_iter = 0;
  if (!resume_checkpoint.empty()) {
    nn::load_checkpoint(resume_checkpoint, policy, value, schedule, start_iter);
  } else {
    RngStream init_rng = RngStream::derive(cfg.train.seed, detail::kInitStream, 0);
    policy.init_weights(init_rng);
    value.init_weights(init_rng);
  }

  const auto metrics_path = std::filesystem::path(out_dir) / "metrics.csv";
  const bool fresh = !std::filesystem::exists(metrics_path) ||
                     std::filesystem::file_size(metrics_path) == 0 || resume_checkpoint.empty();
  std::ofstream metrics(metrics_path,
                        resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (fresh) metrics << IterationMetrics::csv_header() << '\n';

  int last_iter = static_cast<int>(start_iter);
  auto checkpoint = [&](int iter) {
    last_iter = iter;
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.ckpt", iter);
    const auto path = std::filesystem::path(out_dir) / name;
    nn::save_checkpoint(path.string(), policy, value, schedule, static_cast<std::uint32_t>(iter));
    nn::save_checkpoint((std::filesystem::path(out_dir) / "latest.ckpt").string(), policy, value,
                        schedule, static_cast<std::uint32_t>(iter));
  };

  checkpoint(static_cast<int>(start_iter));
  try {
    train_loop(envs, policy, value, schedule, cfg.episode, cfg.trpo, cfg.train,
               static_cast<int>(start_iter), &metrics, checkpoint);
  } catch (...) {
    nn::save_checkpoint((std::filesystem::path(out_dir) / "crash.ckpt").string(), policy, value,
                        schedule, static_cast<std::uint32_t>(last_iter));
    throw;
  }
}

/// Terminal-condition percentages over an evaluation battery. In SCN mode
/// the paper's five columns are reported; outside it the companion-related
/// columns disappear. TO counts episodes that hit the step cap, keeping the
/// total at 100%.
struct EvalReport {
  bool scn = true;
  int trials = 0;
  double rg = 0.0, lc = 0.0, hc = 0.0, hp = 0.0, ho = 0.0, to = 0.0;

  std::string csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    if (scn) {
      os << "RG,LC,HC,HP,HO,TO\n"
         << rg << ',' << lc << ',' << hc << ',' << hp << ',' << ho << ',' << to << '\n';
    } else {
      os << "RG,HP,HO,TO\n" << rg << ',' << hp << ',' << ho << ',' << to << '\n';
    }
    return os.str();
  }
};

/// Runs the evaluation battery for either a trained checkpoint or the RVO
/// baseline (`source == "rvo"`). Scenario k of an evaluation is fully
/// determined by (seed, k).
inline EvalReport cmd_eval(const RunConfig& cfg, const std::string& source, int trials,
                           const std::string& report_out = "") {
  const auto envs = load_scenes(cfg.eval_scenes.empty() ? cfg.train_scenes : cfg.eval_scenes);

  EpisodeParams ep = cfg.episode;
  ep.scn_probability = (cfg.eval_mode == "scn") ? 1.0 : 0.0;

  const bool baseline = (source == "rvo");
  std::optional<nn::GaussianPolicy> policy;
  double sigma = cfg.sigma.end;
  if (!baseline) {
    policy.emplace(make_policy(cfg));
    nn::ValueNet value = make_value_net(cfg);
    nn::SigmaSchedule schedule = cfg.sigma;
    std::uint32_t iter = 0;
    nn::load_checkpoint(source, *policy, value, schedule, iter);
    sigma = schedule.at(static_cast<int>(iter));  // held fixed during evaluation
  }

  EvalReport report;
  report.scn = (cfg.eval_mode == "scn");
  report.trials = trials;
  const double unit = 100.0 / trials;
  for (int k = 0; k < trials; ++k) {
    RngStream rng = RngStream::derive(cfg.train.seed, detail::kEvalStream, static_cast<std::uint64_t>(k));
    const Scenario sc = sample_scenario(envs, ep, rng);
    const EnvironmentSpec& env = envs[static_cast<std::size_t>(sc.env_index)];
    const Episode episode = baseline
                                ? rvo_rollout(env, sc, ep, cfg.rvo, rng)
                                : run_policy_episode(env, sc, ep, *policy, sigma, rng);
    switch (episode.cause) {
      case TerminationCause::GoalReached: report.rg += unit; break;
      case TerminationCause::Stray: report.lc += unit; break;
      case TerminationCause::HitCompanion: report.hc += unit; break;
      case TerminationCause::HitPedestrian: report.hp += unit; break;
      case TerminationCause::HitObstacle: report.ho += unit; break;
      case TerminationCause::None: report.to += unit; break;
    }
  }
  if (!report_out.empty()) detail::atomic_write(report_out, report.csv());
  return report;
}

/// Rolls out one episode (policy checkpoint or RVO baseline) and writes the
/// episode export file.
inline void cmd_rollout(const RunConfig& cfg, const std::string& source,
                        const std::string& scene_manifest, std::uint64_t seed,
                        const std::string& out_path) {
  std::vector<EnvironmentSpec> envs;
  envs.push_back(load_scene_manifest(scene_manifest));

  EpisodeParams ep = cfg.episode;
  ep.scn_probability = (cfg.eval_mode == "scn") ? 1.0 : 0.0;

  RngStream rng = RngStream::derive(seed, detail::kRolloutStream, 0);
  const Scenario sc = sample_scenario(envs, ep, rng);

  Episode episode;
  if (source == "rvo") {
    episode = rvo_rollout(envs[0], sc, ep, cfg.rvo, rng);
  } else {
    nn::GaussianPolicy policy = make_policy(cfg);
    nn::ValueNet value = make_value_net(cfg);
    nn::SigmaSchedule schedule = cfg.sigma;
    std::uint32_t iter = 0;
    nn::load_checkpoint(source, policy, value, schedule, iter);
    episode = run_policy_episode(envs[0], sc, ep, policy, schedule.at(static_cast<int>(iter)), rng);
  }

  std::ostringstream os;
  os << episode_csv_header(ep.n_ped) << '\n';
  write_episode_csv(os, episode, 0, ep.n_ped);
  detail::atomic_write(out_path, os.str());
}

/// Distance statistics over exported episodes: the per-episode minimum
/// robot-pedestrian distance and maximum robot-companion distance, each
/// averaged across episodes.
struct DistanceMetrics {
  double mean_min_ped = std::numeric_limits<double>::quiet_NaN();
  double mean_max_com = std::numeric_limits<double>::quiet_NaN();
  int episodes = 0;
  int episodes_with_peds = 0;
};

inline DistanceMetrics episode_metrics(const std::vector<std::string>& files) {
  if (files.empty()) throw std::runtime_error("metrics: need at least one episode file");
  struct Accum {
    double min_ped = std::numeric_limits<double>::infinity();
    double max_com = 0.0;
    bool has_ped = false;
  };
  std::map<std::pair<std::string, long>, Accum> per_episode;

  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("metrics: cannot open " + file);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("metrics: empty file " + file);
    std::vector<std::string> cols = detail::split_list(header);
    const auto col = [&](const std::string& name) {
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == name) return static_cast<int>(i);
      }
      return -1;
    };
    const int cx = col("x"), cy = col("y"), ccomx = col("com_x"), ccomy = col("com_y");
    const int cid = col("episode_id");
    if (cx < 0 || cy < 0 || ccomx < 0 || ccomy < 0 || cid < 0) {
      throw std::runtime_error("metrics: " + file + " is not an episode export");
    }
    std::vector<std::pair<int, int>> ped_cols;
    for (int p = 1;; ++p) {
      const int px = col("ped" + std::to_string(p) + "_x");
      const int py = col("ped" + std::to_string(p) + "_y");
      if (px < 0 || py < 0) break;
      ped_cols.emplace_back(px, py);
    }

    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trimmed(line).empty()) continue;
      std::vector<std::string> f;
      std::istringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) f.push_back(tok);
      if (f.size() < cols.size()) {
        throw std::runtime_error("metrics: " + file + ":" + std::to_string(line_no) +
                                 ": short row");
      }
      Accum& acc = per_episode[{file, std::stol(f[static_cast<std::size_t>(cid)])}];
      const double x = std::stod(f[static_cast<std::size_t>(cx)]);
      const double y = std::stod(f[static_cast<std::size_t>(cy)]);
      const double dcom = std::hypot(std::stod(f[static_cast<std::size_t>(ccomx)]) - x,
                                     std::stod(f[static_cast<std::size_t>(ccomy)]) - y);
      acc.max_com = std::max(acc.max_com, dcom);
      for (const auto& [px, py] : ped_cols) {
        const double pxv = std::stod(f[static_cast<std::size_t>(px)]);
        const double pyv = std::stod(f[static_cast<std::size_t>(py)]);
        if (std::isnan(pxv) || std::isnan(pyv)) continue;
        acc.min_ped = std::min(acc.min_ped, std::hypot(pxv - x, pyv - y));
        acc.has_ped = true;
      }
    }
  }

  DistanceMetrics m;
  m.episodes = static_cast<int>(per_episode.size());
  double sum_ped = 0.0, sum_com = 0.0;
  for (const auto& [key, acc] : per_episode) {
    sum_com += acc.max_com;
    if (acc.has_ped) {
      sum_ped += acc.min_ped;
      ++m.episodes_with_peds;
    }
  }
  if (m.episodes > 0) m.mean_max_com = sum_com / m.episodes;
  if (m.episodes_with_peds > 0) m.mean_min_ped = sum_ped / m.episodes_with_peds;
  return m;
}

}  // namespace scnav
