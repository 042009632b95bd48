#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/nn/gaussian.hpp"
#include "scnav/nn/networks.hpp"

namespace scnav::nn {

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'C', 'N', 'A', 'V', 'C', 'K', '1'};

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_pack(std::ostream& out, const ParamPack& pack) {
  for (std::size_t i = 0; i < pack.specs().size(); ++i) {
    const auto& spec = pack.specs()[i];
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(spec.name.size()));
    out.write(spec.name.data(), static_cast<std::streamsize>(spec.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.rows));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.cols));
    const auto v = pack.vec(static_cast<int>(i));
    for (Eigen::Index k = 0; k < v.size(); ++k) write_le<double>(out, v[k]);
  }
}

inline void read_pack(std::istream& in, ParamPack& pack) {
  for (std::size_t i = 0; i < pack.specs().size(); ++i) {
    const auto& spec = pack.specs()[i];
    const auto name_len = read_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated tensor name");
    const auto rows = read_le<std::uint32_t>(in);
    const auto cols = read_le<std::uint32_t>(in);
    if (name != spec.name) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' does not match expected '" +
                               spec.name + "'");
    }
    if (rows != static_cast<std::uint32_t>(spec.rows) ||
        cols != static_cast<std::uint32_t>(spec.cols)) {
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name +
                               "' (configured " + std::to_string(spec.rows) + "x" +
                               std::to_string(spec.cols) + ", file has " + std::to_string(rows) +
                               "x" + std::to_string(cols) + ")");
    }
    auto v = pack.vec(static_cast<int>(i));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = read_le<double>(in);
  }
}

}  // namespace detail

/// Serializes policy and value parameters plus the training progress (sigma
/// schedule and iteration counter) into a single versioned container. Values
/// are 64-bit little-endian; the write is atomic (temp file + rename).
inline void save_checkpoint(const std::string& path, const GaussianPolicy& policy,
                            const ValueNet& value, const SigmaSchedule& schedule,
                            std::uint32_t iteration) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_le<std::uint32_t>(out, 1);  // format version
    detail::write_le<std::uint32_t>(out, iteration);
    detail::write_le<double>(out, schedule.start);
    detail::write_le<double>(out, schedule.end);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(schedule.decay_iters));
    const auto n_tensors = policy.params().specs().size() + value.params().specs().size();
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(n_tensors));
    detail::write_pack(out, policy.params());
    detail::write_pack(out, value.params());
    if (!out.flush()) throw std::runtime_error("checkpoint: write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Restores parameters and schedule state, validating every tensor name and
/// shape against the nets built from the current configuration.
inline void load_checkpoint(const std::string& path, GaussianPolicy& policy, ValueNet& value,
                            SigmaSchedule& schedule, std::uint32_t& iteration) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  iteration = detail::read_le<std::uint32_t>(in);
  schedule.start = detail::read_le<double>(in);
  schedule.end = detail::read_le<double>(in);
  schedule.decay_iters = static_cast<int>(detail::read_le<std::uint32_t>(in));
  const auto n_tensors = detail::read_le<std::uint32_t>(in);
  const auto expected = policy.params().specs().size() + value.params().specs().size();
  if (n_tensors != expected) {
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  }
  detail::read_pack(in, policy.params());
  detail::read_pack(in, value.params());
}

/// Prints the container manifest without needing a configuration.
inline void inspect_checkpoint(const std::string& path, std::ostream& os) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  const auto iteration = detail::read_le<std::uint32_t>(in);
  const double s_start = detail::read_le<double>(in);
  const double s_end = detail::read_le<double>(in);
  const auto s_decay = detail::read_le<std::uint32_t>(in);
  const auto n_tensors = detail::read_le<std::uint32_t>(in);
  os << "version: " << version << "\n";
  os << "iteration: " << iteration << "\n";
  os << "sigma_schedule: start=" << s_start << " end=" << s_end << " decay_iters=" << s_decay
     << "\n";
  os << "tensors: " << n_tensors << "\n";
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = detail::read_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = detail::read_le<std::uint32_t>(in);
    const auto cols = detail::read_le<std::uint32_t>(in);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    os << "  " << name << "  " << rows << "x" << cols << "\n";
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    total += count;
    in.seekg(static_cast<std::streamoff>(count * sizeof(double)), std::ios::cur);
  }
  os << "parameters: " << total << "\n";
}

}  // namespace scnav::nn
