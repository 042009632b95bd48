#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/occupancy.hpp"

namespace scnav {

/// One recorded pedestrian track, resampled to one position per frame
/// (0.1 s spacing). Gaps in the recording are linearly interpolated at load.
struct Trajectory {
  int id = 0;
  int first_frame = 0;
  std::vector<Eigen::Vector2d> points;

  int last_frame() const { return first_frame + static_cast<int>(points.size()) - 1; }

  /// Position at a global frame; holds the last position after the recording
  /// ends. Returns nothing before the first recorded frame.
  std::optional<Eigen::Vector2d> position_at(int frame) const {
    if (frame < first_frame) return std::nullopt;
    const int i = std::min(frame - first_frame, static_cast<int>(points.size()) - 1);
    return points[static_cast<std::size_t>(i)];
  }

  double net_displacement() const { return (points.back() - points.front()).norm(); }
};

/// One recorded crowd scene: the trajectory set and the occupancy map, plus
/// the subset of trajectories eligible to be played by the robot.
struct EnvironmentSpec {
  std::string name;
  std::vector<Trajectory> trajectories;
  OccupancyGrid grid;
  std::vector<int> companion_candidates;

  const Trajectory* find(int id) const {
    for (const auto& t : trajectories) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }
};

/// Parses the canonical trajectory file: one `frame,id,x,y` record per line.
/// Frames must be strictly increasing within an id; gaps are filled by linear
/// interpolation. Malformed input is reported with its line number.
inline std::vector<Trajectory> load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trajectories: cannot open " + path);

  struct Raw {
    std::vector<int> frames;
    std::vector<Eigen::Vector2d> points;
  };
  std::map<int, Raw> raws;  // keyed by id; insertion-independent deterministic order

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tok;
    double fields[4];
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, tok, ',')) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected frame,id,x,y");
      }
      try {
        fields[i] = std::stod(tok);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": malformed number '" + tok + "'");
      }
    }
    if (!std::isfinite(fields[2]) || !std::isfinite(fields[3])) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": non-finite position");
    }
    const int frame = static_cast<int>(fields[0]);
    const int id = static_cast<int>(fields[1]);
    Raw& raw = raws[id];
    if (!raw.frames.empty() && frame <= raw.frames.back()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": non-monotone frame index for pedestrian " +
                               std::to_string(id));
    }
    raw.frames.push_back(frame);
    raw.points.emplace_back(fields[2], fields[3]);
  }

  std::vector<Trajectory> out;
  for (const auto& [id, raw] : raws) {
    if (raw.frames.size() < 2) {
      throw std::runtime_error(path + ": trajectory " + std::to_string(id) +
                               " has fewer than 2 records");
    }
    Trajectory t;
    t.id = id;
    t.first_frame = raw.frames.front();
    for (std::size_t i = 0; i + 1 < raw.frames.size(); ++i) {
      const int span = raw.frames[i + 1] - raw.frames[i];
      for (int k = 0; k < span; ++k) {
        const double a = static_cast<double>(k) / span;
        t.points.push_back((1.0 - a) * raw.points[i] + a * raw.points[i + 1]);
      }
    }
    t.points.push_back(raw.points.back());
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

inline std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trimmed(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

/// Writes a file atomically: contents go to a sibling temp file which is
/// renamed into place only on success.
inline void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Loads a scene manifest. The manifest names the trajectory file, the map
/// graymap (with its `<map>.meta` sidecar), and pedestrian ids excluded from
/// companion candidacy. Paths are relative to the manifest location.
inline EnvironmentSpec load_scene_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path);
  std::string name, traj_file, map_file;
  std::vector<int> excluded;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(manifest_path + ":" + std::to_string(line_no) +
                               ": expected key = value");
    }
    const std::string key = detail::trimmed(line.substr(0, eq));
    const std::string val = detail::trimmed(line.substr(eq + 1));
    if (key == "name") name = val;
    else if (key == "trajectories") traj_file = val;
    else if (key == "map") map_file = val;
    else if (key == "excluded_ids") {
      for (const auto& tok : detail::split_list(val)) excluded.push_back(std::stoi(tok));
    } else {
      throw std::runtime_error(manifest_path + ":" + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }
  }
  if (name.empty() || traj_file.empty() || map_file.empty()) {
    throw std::runtime_error(manifest_path + ": manifest must define name, trajectories, map");
  }

  const auto base = std::filesystem::path(manifest_path).parent_path();
  EnvironmentSpec env;
  env.name = name;
  const std::string map_path = (base / map_file).string();
  env.grid = OccupancyGrid::load_pgm(map_path, map_path + ".meta");
  env.trajectories = load_trajectory_csv((base / traj_file).string());

  for (const auto& t : env.trajectories) {
    for (const auto& p : t.points) {
      if (!env.grid.contains(p)) {
        std::ostringstream os;
        os << env.name << ": trajectory " << t.id << " leaves the map bounds at ("
           << p.x() << ", " << p.y() << ")";
        throw std::runtime_error(os.str());
      }
    }
    if (std::find(excluded.begin(), excluded.end(), t.id) == excluded.end()) {
      env.companion_candidates.push_back(t.id);
    }
  }
  return env;
}

struct IngestReport {
  int trajectory_count = 0;
  double min_duration_s = 0.0;
  double max_duration_s = 0.0;
  double mean_duration_s = 0.0;
  std::vector<int> wanderer_ids;
  std::vector<int> companion_candidates;
};

/// Validates a trajectory file against a map, auto-flags wanderers (net
/// displacement under the threshold), and writes a scene manifest. Nothing is
/// written unless validation passes.
inline IngestReport ingest_scene(const std::string& traj_path, const std::string& map_path,
                                 const std::string& manifest_out, double wanderer_threshold,
                                 const std::vector<int>& extra_excluded = {},
                                 const std::string& scene_name = "") {
  const OccupancyGrid grid = OccupancyGrid::load_pgm(map_path, map_path + ".meta");
  const auto trajectories = load_trajectory_csv(traj_path);
  if (trajectories.empty()) {
    throw std::runtime_error("ingest: no trajectories in " + traj_path);
  }

  IngestReport report;
  report.trajectory_count = static_cast<int>(trajectories.size());
  double total = 0.0;
  report.min_duration_s = std::numeric_limits<double>::infinity();
  for (const auto& t : trajectories) {
    for (const auto& p : t.points) {
      if (!grid.contains(p)) {
        std::ostringstream os;
        os << "ingest: trajectory " << t.id << " leaves the map bounds at (" << p.x()
           << ", " << p.y() << ")";
        throw std::runtime_error(os.str());
      }
    }
    const double dur = 0.1 * (static_cast<double>(t.points.size()) - 1.0);
    total += dur;
    report.min_duration_s = std::min(report.min_duration_s, dur);
    report.max_duration_s = std::max(report.max_duration_s, dur);
    const bool wanderer = t.net_displacement() < wanderer_threshold;
    const bool user_excluded =
        std::find(extra_excluded.begin(), extra_excluded.end(), t.id) != extra_excluded.end();
    if (wanderer) report.wanderer_ids.push_back(t.id);
    if (!wanderer && !user_excluded) report.companion_candidates.push_back(t.id);
  }
  report.mean_duration_s = total / report.trajectory_count;
  if (report.companion_candidates.empty()) {
    throw std::runtime_error("ingest: every trajectory is excluded; no companion candidate");
  }

  std::vector<int> excluded = report.wanderer_ids;
  for (int id : extra_excluded) {
    if (std::find(excluded.begin(), excluded.end(), id) == excluded.end()) {
      excluded.push_back(id);
    }
  }
  std::sort(excluded.begin(), excluded.end());

  const auto base = std::filesystem::path(manifest_out).parent_path();
  auto relative_to_manifest = [&](const std::string& p) {
    const auto rel = std::filesystem::relative(p, base.empty() ? "." : base);
    return rel.empty() ? p : rel.string();
  };

  std::ostringstream os;
  os << "name = "
     << (scene_name.empty() ? std::filesystem::path(traj_path).stem().string() : scene_name)
     << "\n";
  os << "trajectories = " << relative_to_manifest(traj_path) << "\n";
  os << "map = " << relative_to_manifest(map_path) << "\n";
  os << "excluded_ids = ";
  for (std::size_t i = 0; i < excluded.size(); ++i) {
    os << (i ? "," : "") << excluded[i];
  }
  os << "\n";
  detail::atomic_write(manifest_out, os.str());
  return report;
}

}  // namespace scnav
