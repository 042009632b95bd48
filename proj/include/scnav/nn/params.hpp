#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace scnav::nn {

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
};

/// A set of named matrices stored contiguously in one flat vector. The flat
/// view is the canonical parameter order used by every gradient and update;
/// matrix views alias the same storage, so flatten/unflatten is the identity.
class ParamPack {
 public:
  int add(const std::string& name, int rows, int cols) {
    if (finalized_) throw std::logic_error("ParamPack: add after finalize");
    TensorSpec spec{name, rows, cols, next_offset_};
    next_offset_ += spec.size();
    specs_.push_back(std::move(spec));
    return static_cast<int>(specs_.size()) - 1;
  }

  void finalize() {
    flat_ = Eigen::VectorXd::Zero(next_offset_);
    finalized_ = true;
  }

  Eigen::Index total() const { return next_offset_; }
  const std::vector<TensorSpec>& specs() const { return specs_; }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (specs_[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  Eigen::VectorXd& flat() { return flat_; }
  const Eigen::VectorXd& flat() const { return flat_; }

  Eigen::Map<Eigen::MatrixXd> mat(int idx) {
    const auto& s = specs_[static_cast<std::size_t>(idx)];
    return {flat_.data() + s.offset, s.rows, s.cols};
  }

  Eigen::Map<const Eigen::MatrixXd> mat(int idx) const {
    const auto& s = specs_[static_cast<std::size_t>(idx)];
    return {flat_.data() + s.offset, s.rows, s.cols};
  }

  Eigen::Map<Eigen::VectorXd> vec(int idx) {
    const auto& s = specs_[static_cast<std::size_t>(idx)];
    return {flat_.data() + s.offset, s.size()};
  }

  Eigen::Map<const Eigen::VectorXd> vec(int idx) const {
    const auto& s = specs_[static_cast<std::size_t>(idx)];
    return {flat_.data() + s.offset, s.size()};
  }

  /// A zeroed pack with the same layout (for gradients and tangents).
  ParamPack like() const {
    ParamPack p;
    p.specs_ = specs_;
    p.next_offset_ = next_offset_;
    p.finalize();
    return p;
  }

 private:
  std::vector<TensorSpec> specs_;
  Eigen::Index next_offset_ = 0;
  Eigen::VectorXd flat_;
  bool finalized_ = false;
};

/// Read-only matrix views over an external flat vector laid out like `pack`.
/// Used to interpret gradient/tangent vectors without copying.
class PackView {
 public:
  PackView(const ParamPack& pack, const Eigen::VectorXd& data)
      : specs_(&pack.specs()), data_(&data) {
    if (data.size() != pack.total()) {
      throw std::invalid_argument("PackView: size mismatch");
    }
  }

  Eigen::Map<const Eigen::MatrixXd> mat(int idx) const {
    const auto& s = (*specs_)[static_cast<std::size_t>(idx)];
    return {data_->data() + s.offset, s.rows, s.cols};
  }

  Eigen::Map<const Eigen::VectorXd> vec(int idx) const {
    const auto& s = (*specs_)[static_cast<std::size_t>(idx)];
    return {data_->data() + s.offset, s.size()};
  }

 private:
  const std::vector<TensorSpec>* specs_;
  const Eigen::VectorXd* data_;
};

/// Mutable counterpart of PackView for accumulating gradients.
class MutablePackView {
 public:
  MutablePackView(const ParamPack& pack, Eigen::VectorXd& data)
      : specs_(&pack.specs()), data_(&data) {
    if (data.size() != pack.total()) {
      throw std::invalid_argument("MutablePackView: size mismatch");
    }
  }

  Eigen::Map<Eigen::MatrixXd> mat(int idx) const {
    const auto& s = (*specs_)[static_cast<std::size_t>(idx)];
    return {data_->data() + s.offset, s.rows, s.cols};
  }

  Eigen::Map<Eigen::VectorXd> vec(int idx) const {
    const auto& s = (*specs_)[static_cast<std::size_t>(idx)];
    return {data_->data() + s.offset, s.size()};
  }

 private:
  const std::vector<TensorSpec>* specs_;
  Eigen::VectorXd* data_;
};

}  // namespace scnav::nn
