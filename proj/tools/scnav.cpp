// Command-line surface for the socially concomitant navigation stack:
// dataset ingestion, training, evaluation batteries, rollout export,
// distance metrics, and checkpoint inspection.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "scnav/scnav.hpp"

namespace {

scnav::RunConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  scnav::RunConfig cfg =
      config_path.empty() ? scnav::RunConfig{} : scnav::parse_config_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    scnav::apply_config_value(cfg, scnav::detail::trimmed(kv.substr(0, eq)),
                              scnav::detail::trimmed(kv.substr(eq + 1)));
  }
  scnav::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Socially concomitant navigation: training, evaluation and tooling"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a scene and write its manifest");
  std::string in_traj, in_map, in_out, in_name;
  double in_wanderer = 1.0;
  std::vector<int> in_exclude;
  ingest->add_option("--trajectories", in_traj, "Trajectory CSV file")->required();
  ingest->add_option("--map", in_map, "Occupancy graymap (with .meta sidecar)")->required();
  ingest->add_option("--out", in_out, "Manifest output path")->required();
  ingest->add_option("--name", in_name, "Scene name (defaults to file stem)");
  ingest->add_option("--wanderer-threshold", in_wanderer,
                     "Net displacement (m) below which a pedestrian is flagged as wanderer");
  ingest->add_option("--exclude", in_exclude, "Extra pedestrian ids to exclude");

  // train
  auto* train = app.add_subcommand("train", "Run the training loop");
  std::string tr_out = "run";
  std::string tr_resume;
  train->add_option("--config", config_path, "Config file")->required();
  train->add_option("--out", tr_out, "Output directory");
  train->add_option("--resume", tr_resume, "Checkpoint to resume from");
  train->add_option("--set", overrides, "Override a config key (key=value)");

  // eval
  auto* eval = app.add_subcommand("eval", "Terminal-condition rates over many trials");
  std::string ev_checkpoint, ev_baseline, ev_out;
  int ev_trials = 0;
  eval->add_option("--config", config_path, "Config file")->required();
  eval->add_option("--checkpoint", ev_checkpoint, "Policy checkpoint");
  eval->add_option("--baseline", ev_baseline, "Baseline planner name (rvo)");
  eval->add_option("--trials", ev_trials, "Trial count (default from config)");
  eval->add_option("--out", ev_out, "Write the rate report CSV here");
  eval->add_option("--set", overrides, "Override a config key (key=value)");

  // rollout
  auto* rollout = app.add_subcommand("rollout", "Export one episode for plotting");
  std::string ro_checkpoint, ro_baseline, ro_scene, ro_out;
  std::uint64_t ro_seed = 0;
  rollout->add_option("--config", config_path, "Config file")->required();
  rollout->add_option("--checkpoint", ro_checkpoint, "Policy checkpoint");
  rollout->add_option("--baseline", ro_baseline, "Baseline planner name (rvo)");
  rollout->add_option("--scene", ro_scene, "Scene manifest")->required();
  rollout->add_option("--seed", ro_seed, "Episode seed");
  rollout->add_option("--out", ro_out, "Episode CSV output")->required();
  rollout->add_option("--set", overrides, "Override a config key (key=value)");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Distance metrics over episode exports");
  std::vector<std::string> me_files;
  metrics->add_option("files", me_files, "Episode export files")->required();

  // inspect-checkpoint
  auto* inspect = app.add_subcommand("inspect-checkpoint", "Print a checkpoint manifest");
  std::string ck_path;
  inspect->add_option("checkpoint", ck_path, "Checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      scnav::cmd_ingest(in_traj, in_map, in_out, in_wanderer, in_exclude, in_name, std::cout);
    } else if (*train) {
      scnav::cmd_train(load_config(config_path, overrides), tr_out, tr_resume);
    } else if (*eval) {
      if (ev_checkpoint.empty() == ev_baseline.empty()) {
        throw std::runtime_error("eval: pass exactly one of --checkpoint or --baseline");
      }
      if (!ev_baseline.empty() && ev_baseline != "rvo") {
        throw std::runtime_error("eval: unknown baseline '" + ev_baseline + "'");
      }
      const scnav::RunConfig cfg = load_config(config_path, overrides);
      const int trials = ev_trials > 0 ? ev_trials : cfg.eval_trials;
      const auto report =
          scnav::cmd_eval(cfg, ev_baseline.empty() ? ev_checkpoint : "rvo", trials, ev_out);
      std::cout << report.csv();
    } else if (*rollout) {
      if (ro_checkpoint.empty() == ro_baseline.empty()) {
        throw std::runtime_error("rollout: pass exactly one of --checkpoint or --baseline");
      }
      if (!ro_baseline.empty() && ro_baseline != "rvo") {
        throw std::runtime_error("rollout: unknown baseline '" + ro_baseline + "'");
      }
      scnav::cmd_rollout(load_config(config_path, overrides),
                         ro_baseline.empty() ? ro_checkpoint : "rvo", ro_scene, ro_seed, ro_out);
    } else if (*metrics) {
      const auto m = scnav::episode_metrics(me_files);
      std::cout << "episodes: " << m.episodes << "\n";
      std::cout << "D_ped_mean: " << m.mean_min_ped << "\n";
      std::cout << "D_com_mean: " << m.mean_max_com << "\n";
    } else if (*inspect) {
      scnav::nn::inspect_checkpoint(ck_path, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
