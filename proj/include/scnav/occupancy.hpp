#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/geometry.hpp"

namespace scnav {

/// Binary occupancy grid. Cell (row, col) covers the square centered at
/// origin + (col, row) * resolution; row 0 is the first raster row of the
/// underlying graymap.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(int rows, int cols, double resolution, const Eigen::Vector2d& origin)
      : rows_(rows), cols_(cols), resolution_(resolution), origin_(origin),
        cells_(static_cast<std::size_t>(rows) * cols, 0) {
    if (rows <= 0 || cols <= 0) {
      throw std::invalid_argument("OccupancyGrid: dimensions must be positive");
    }
    if (!(resolution > 0.0)) {
      throw std::invalid_argument("OccupancyGrid: resolution must be positive");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double resolution() const { return resolution_; }
  const Eigen::Vector2d& origin() const { return origin_; }

  bool occupied(int row, int col) const { return cells_[index(row, col)] != 0; }

  void set_occupied(int row, int col, bool value) {
    cells_[index(row, col)] = value ? 1 : 0;
  }

  Eigen::Vector2d cell_center(int row, int col) const {
    return origin_ + Eigen::Vector2d(col * resolution_, row * resolution_);
  }

  /// True when the point lies inside the outer boundary of the grid.
  bool contains(const Eigen::Vector2d& p) const {
    const double half = 0.5 * resolution_;
    return p.x() >= origin_.x() - half && p.x() <= origin_.x() + (cols_ - 0.5) * resolution_ &&
           p.y() >= origin_.y() - half && p.y() <= origin_.y() + (rows_ - 0.5) * resolution_;
  }

  int occupied_count() const {
    int n = 0;
    for (auto c : cells_) n += c;
    return n;
  }

  int free_count() const { return rows_ * cols_ - occupied_count(); }

  /// Centers of all occupied cells, in raster order.
  std::vector<Eigen::Vector2d> occupied_centers() const {
    std::vector<Eigen::Vector2d> out;
    out.reserve(occupied_count());
    for (int r = 0; r < rows_; ++r) {
      for (int c = 0; c < cols_; ++c) {
        if (occupied(r, c)) out.push_back(cell_center(r, c));
      }
    }
    return out;
  }

  /// Centers of the four corner cells.
  std::array<Eigen::Vector2d, 4> corner_centers() const {
    return {cell_center(0, 0), cell_center(0, cols_ - 1),
            cell_center(rows_ - 1, 0), cell_center(rows_ - 1, cols_ - 1)};
  }

  /// Reads a portable graymap (P5 or P2; 0 = occupied, 255 = free) plus its
  /// sidecar metadata file carrying resolution and origin.
  static OccupancyGrid load_pgm(const std::string& pgm_path, const std::string& meta_path);

  /// Writes the grid as a binary graymap plus sidecar metadata.
  void save_pgm(const std::string& pgm_path, const std::string& meta_path) const;

 private:
  std::size_t index(int row, int col) const {
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_) {
      throw std::out_of_range("OccupancyGrid: cell index out of range");
    }
    return static_cast<std::size_t>(row) * cols_ + col;
  }

  int rows_ = 0;
  int cols_ = 0;
  double resolution_ = 1.0;
  Eigen::Vector2d origin_{0.0, 0.0};
  std::vector<std::uint8_t> cells_;
};

namespace detail {

// Skips whitespace and '#' comment lines in a PGM header.
inline int next_pgm_token(std::istream& in) {
  for (;;) {
    int ch = in.get();
    if (ch == std::istream::traits_type::eof()) {
      throw std::runtime_error("pgm: truncated header");
    }
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (!std::isspace(ch)) {
      in.unget();
      int value = 0;
      if (!(in >> value)) throw std::runtime_error("pgm: malformed header token");
      return value;
    }
  }
}

}  // namespace detail

inline OccupancyGrid OccupancyGrid::load_pgm(const std::string& pgm_path,
                                             const std::string& meta_path) {
  std::ifstream in(pgm_path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + pgm_path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") {
    throw std::runtime_error("pgm: unsupported format '" + magic + "' in " + pgm_path);
  }
  const int cols = detail::next_pgm_token(in);
  const int rows = detail::next_pgm_token(in);
  const int maxval = detail::next_pgm_token(in);
  if (cols <= 0 || rows <= 0 || maxval <= 0 || maxval > 255) {
    throw std::runtime_error("pgm: invalid dimensions or maxval in " + pgm_path);
  }

  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("pgm: cannot open metadata " + meta_path);
  double resolution = 0.0, ox = 0.0, oy = 0.0;
  bool has_res = false, has_ox = false, has_oy = false;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(val);
    if (key == "resolution") { resolution = std::stod(val); has_res = true; }
    else if (key == "origin_x") { ox = std::stod(val); has_ox = true; }
    else if (key == "origin_y") { oy = std::stod(val); has_oy = true; }
  }
  if (!has_res || !has_ox || !has_oy) {
    throw std::runtime_error("pgm: metadata must define resolution, origin_x, origin_y");
  }

  OccupancyGrid grid(rows, cols, resolution, Eigen::Vector2d(ox, oy));
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("pgm: truncated pixel data in " + pgm_path);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        grid.set_occupied(r, c, raw[static_cast<std::size_t>(r) * cols + c] < maxval / 2);
      }
    }
  } else {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        int v = 0;
        if (!(in >> v)) throw std::runtime_error("pgm: truncated pixel data in " + pgm_path);
        grid.set_occupied(r, c, v < maxval / 2);
      }
    }
  }
  if (grid.free_count() == 0) {
    throw std::runtime_error("pgm: map has no free cell: " + pgm_path);
  }
  return grid;
}

inline void OccupancyGrid::save_pgm(const std::string& pgm_path,
                                    const std::string& meta_path) const {
  std::ofstream out(pgm_path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + pgm_path);
  out << "P5\n" << cols_ << " " << rows_ << "\n255\n";
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      out.put(occupied(r, c) ? '\0' : static_cast<char>(255));
    }
  }
  std::ofstream meta(meta_path);
  if (!meta) throw std::runtime_error("pgm: cannot write metadata " + meta_path);
  std::ostringstream os;
  os.precision(17);
  os << "resolution = " << resolution_ << "\n"
     << "origin_x = " << origin_.x() << "\n"
     << "origin_y = " << origin_.y() << "\n";
  meta << os.str();
}

}  // namespace scnav
