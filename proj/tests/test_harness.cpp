#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "scnav/harness.hpp"
#include "test_util.hpp"

using namespace scnav;
using testutil::TempDir;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  out << contents;
}

/// Small config pointing at a generated goal-only scene.
RunConfig smoke_config(const TempDir& tmp) {
  const auto manifest = testutil::write_scene_files(testutil::goal_only_env(), tmp.path(), "goal");
  RunConfig cfg;
  cfg.train_scenes = {manifest};
  cfg.eval_scenes = {manifest};
  cfg.feature_units = {8, 6};
  cfg.lstm_units = 6;
  cfg.value_units = {8, 6};
  cfg.episode.scn_probability = 0.0;
  cfg.episode.max_steps = 40;
  cfg.eval_mode = "social";
  cfg.train.batch_size = 120;
  cfg.train.iterations = 2;
  cfg.train.checkpoint_every = 1;
  cfg.train.seed = 5;
  return cfg;
}

}  // namespace

TEST(Config, ParsesTypedValuesAndLists) {
  TempDir tmp;
  const std::string path = tmp.file("run.cfg");
  write_file(path,
             "# comment\n"
             "gamma = 0.99\n"
             "feature_units = 32,16\n"
             "train_scenes = a.manifest, b.manifest\n"
             "deterministic = true\n"
             "eval_mode = social\n"
             "v_r_max = 1.0471975511965976\n");
  const RunConfig cfg = parse_config_file(path);
  EXPECT_DOUBLE_EQ(cfg.trpo.gamma, 0.99);
  EXPECT_EQ(cfg.feature_units, (std::vector<int>{32, 16}));
  EXPECT_EQ(cfg.train_scenes, (std::vector<std::string>{"a.manifest", "b.manifest"}));
  EXPECT_TRUE(cfg.deterministic);
  EXPECT_EQ(cfg.eval_mode, "social");
  EXPECT_NEAR(cfg.episode.limits.v_r_max, kPi / 3.0, 1e-12);
}

TEST(Config, UnknownKeyRejected) {
  TempDir tmp;
  const std::string path = tmp.file("bad.cfg");
  write_file(path, "gamma = 0.9\nnot_a_key = 1\n");
  EXPECT_THROW(parse_config_file(path), std::runtime_error);
}

TEST(Config, OutOfRangeValueRejected) {
  TempDir tmp;
  write_file(tmp.file("bad.cfg"), "gamma = 1.5\n");
  EXPECT_THROW(parse_config_file(tmp.file("bad.cfg")), std::runtime_error);
  write_file(tmp.file("bad2.cfg"), "lambda = -0.1\n");
  EXPECT_THROW(parse_config_file(tmp.file("bad2.cfg")), std::runtime_error);
  write_file(tmp.file("bad3.cfg"), "eval_mode = both\n");
  EXPECT_THROW(parse_config_file(tmp.file("bad3.cfg")), std::runtime_error);
}

TEST(Config, MalformedLineReported) {
  TempDir tmp;
  write_file(tmp.file("bad.cfg"), "gamma 0.9\n");
  try {
    parse_config_file(tmp.file("bad.cfg"));
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos);
  }
}

TEST(CmdTrain, WritesMetricsAndCheckpoints) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  const std::string out = tmp.file("run");
  cmd_train(cfg, out);

  EXPECT_TRUE(std::filesystem::exists(out + "/metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(out + "/checkpoint_000000.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(out + "/checkpoint_000002.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(out + "/latest.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(out + "/.lock"));  // released

  const std::string metrics = slurp(out + "/metrics.csv");
  std::istringstream in(metrics);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, IterationMetrics::csv_header());
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST(CmdTrain, LockedDirectoryRefused) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  const std::string out = tmp.file("run");
  std::filesystem::create_directories(out);
  write_file(out + "/.lock", "locked\n");
  EXPECT_THROW(cmd_train(cfg, out), std::runtime_error);
}

TEST(CmdTrain, ResumeContinuesIterationAndSigma) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  const std::string out = tmp.file("run");
  cmd_train(cfg, out);

  // resume for two more iterations from the final checkpoint
  RunConfig cfg2 = cfg;
  cfg2.train.iterations = 4;
  cmd_train(cfg2, out + "_resumed", out + "/latest.ckpt");

  nn::GaussianPolicy policy = make_policy(cfg);
  nn::ValueNet value = make_value_net(cfg);
  nn::SigmaSchedule schedule;
  std::uint32_t iter = 0;
  nn::load_checkpoint(out + "_resumed/latest.ckpt", policy, value, schedule, iter);
  EXPECT_EQ(iter, 4u);

  const std::string metrics = slurp(out + "_resumed/metrics.csv");
  EXPECT_NE(metrics.find("\n2,"), std::string::npos);  // rows continue at iteration 2
  EXPECT_NE(metrics.find("\n3,"), std::string::npos);
}

TEST(CmdTrain, DeterministicMetricsAcrossRuns) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  cmd_train(cfg, tmp.file("a"));
  cmd_train(cfg, tmp.file("b"));
  const std::string a = slurp(tmp.file("a") + "/metrics.csv");
  const std::string b = slurp(tmp.file("b") + "/metrics.csv");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);  // byte-identical
}

TEST(CmdEval, RatesSumToHundredAndMatchModeColumns) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  cmd_train(cfg, tmp.file("run"));

  const EvalReport rep = cmd_eval(cfg, tmp.file("run") + "/latest.ckpt", 40, tmp.file("rep.csv"));
  EXPECT_FALSE(rep.scn);
  EXPECT_NEAR(rep.rg + rep.hp + rep.ho + rep.to, 100.0, 0.1);

  const std::string csv = slurp(tmp.file("rep.csv"));
  std::istringstream in(csv);
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "RG,HP,HO,TO");
  EXPECT_FALSE(std::getline(in, extra) && !extra.empty());  // exactly one rate row
}

TEST(CmdEval, RvoBaselineScnColumns) {
  TempDir tmp;
  const auto manifest =
      testutil::write_scene_files(testutil::corridor_env(), tmp.path(), "corridor");
  RunConfig cfg;
  cfg.train_scenes = {manifest};
  cfg.eval_scenes = {manifest};
  cfg.eval_mode = "scn";
  cfg.episode.max_steps = 400;
  const EvalReport rep = cmd_eval(cfg, "rvo", 10, tmp.file("rvo.csv"));
  EXPECT_TRUE(rep.scn);
  EXPECT_NEAR(rep.rg + rep.lc + rep.hc + rep.hp + rep.ho + rep.to, 100.0, 0.1);
  const std::string csv = slurp(tmp.file("rvo.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "RG,LC,HC,HP,HO,TO");
}

TEST(CmdEval, StationaryPolicyNeverReachesBehindGoal) {
  // an untrained zero-weight policy with sigma ~ 0 stands still; the goal
  // starts 3 m away, so RG must be 0 and every trial times out
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  cfg.sigma.start = cfg.sigma.end = 1e-6;
  cfg.episode.max_steps = 25;

  nn::GaussianPolicy policy = make_policy(cfg);  // zero weights: mu = 0
  nn::ValueNet value = make_value_net(cfg);
  nn::save_checkpoint(tmp.file("zero.ckpt"), policy, value, cfg.sigma, 0);
  const EvalReport rep = cmd_eval(cfg, tmp.file("zero.ckpt"), 15);
  EXPECT_DOUBLE_EQ(rep.rg, 0.0);
  EXPECT_DOUBLE_EQ(rep.to, 100.0);
}

TEST(CmdRollout, FixedSeedWritesIdenticalFiles) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);
  cmd_train(cfg, tmp.file("run"));
  const std::string scene = cfg.train_scenes[0];
  cmd_rollout(cfg, tmp.file("run") + "/latest.ckpt", scene, 9, tmp.file("a.csv"));
  cmd_rollout(cfg, tmp.file("run") + "/latest.ckpt", scene, 9, tmp.file("b.csv"));
  const std::string a = slurp(tmp.file("a.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(tmp.file("b.csv")));
  EXPECT_NE(a.find("com_x"), std::string::npos);
}

TEST(CmdRollout, SynthesizedCompanionColumnsCarryConstantDistance) {
  TempDir tmp;
  RunConfig cfg = smoke_config(tmp);  // social mode: synthesized companion
  cmd_train(cfg, tmp.file("run"));
  cmd_rollout(cfg, tmp.file("run") + "/latest.ckpt", cfg.train_scenes[0], 3, tmp.file("r.csv"));

  std::ifstream in(tmp.file("r.csv"));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    const double x = std::stod(f[2]), y = std::stod(f[3]);
    const double cx = std::stod(f[9]), cy = std::stod(f[10]);
    EXPECT_NEAR(std::hypot(cx - x, cy - y), 0.8, 1e-9);
  }
}

TEST(Metrics, SpecExamples) {
  TempDir tmp;
  const std::string header = episode_csv_header(1);
  // one episode whose closest pedestrian approach is 0.35 m, constant d_com 1.0
  write_file(tmp.file("e1.csv"),
             header +
                 "\n"
                 "0,0,0,0,0,0.5,0,0,None,1.0,0,3.0,0,\n"
                 "0,1,1,0,0,0.5,0,0,None,2.0,0,1.35,0\n"
                 "0,2,2,0,0,0.5,0,0,None,3.0,0,4.0,0\n");
  const DistanceMetrics m = episode_metrics({tmp.file("e1.csv")});
  EXPECT_EQ(m.episodes, 1);
  EXPECT_NEAR(m.mean_min_ped, 0.35, 1e-12);
  EXPECT_NEAR(m.mean_max_com, 1.0, 1e-12);
}

TEST(Metrics, AveragesAcrossEpisodes) {
  TempDir tmp;
  const std::string header = episode_csv_header(1);
  write_file(tmp.file("e.csv"),
             header +
                 "\n"
                 "0,0,0,0,0,0,0,0,None,1.0,0,0.3,0\n"
                 "1,0,0,0,0,0,0,0,None,0.5,0,0.5,0\n");
  const DistanceMetrics m = episode_metrics({tmp.file("e.csv")});
  EXPECT_EQ(m.episodes, 2);
  EXPECT_NEAR(m.mean_min_ped, 0.4, 1e-12);
  EXPECT_NEAR(m.mean_max_com, 0.75, 1e-12);
}

TEST(Metrics, NanPedestrianSlotsIgnored) {
  TempDir tmp;
  const std::string header = episode_csv_header(2);
  write_file(tmp.file("e.csv"),
             header +
                 "\n"
                 "0,0,0,0,0,0,0,0,None,1.0,0,nan,nan,0.9,0\n");
  const DistanceMetrics m = episode_metrics({tmp.file("e.csv")});
  EXPECT_NEAR(m.mean_min_ped, 0.9, 1e-12);
}

TEST(CmdIngest, ReportsAndWritesManifest) {
  TempDir tmp;
  OccupancyGrid grid(40, 40, 0.5, Eigen::Vector2d(-2.0, -2.0));
  const std::string map = tmp.file("m.pgm");
  grid.save_pgm(map, map + ".meta");
  std::ostringstream traj;
  for (int i = 0; i <= 30; ++i) traj << i << ",1," << 0.1 * i << ",0\n";
  write_file(tmp.file("t.csv"), traj.str());

  std::ostringstream report;
  const IngestReport r =
      cmd_ingest(tmp.file("t.csv"), map, tmp.file("s.manifest"), 1.0, {}, "toy", report);
  EXPECT_EQ(r.trajectory_count, 1);
  EXPECT_NE(report.str().find("trajectories: 1"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(tmp.file("s.manifest")));
  // round trip through the loader
  const EnvironmentSpec env = load_scene_manifest(tmp.file("s.manifest"));
  EXPECT_EQ(env.name, "toy");
}
