// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edmtt/error.hpp"

namespace edmtt {

/// Name and shape of one tensor inside a flat parameter vector.
struct TensorInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const TensorInfo&) const = default;
};

/// Ordered list of tensors laid out back to back (column-major each).
class Manifest {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    entries_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return entries_.size() - 1;
  }

  const TensorInfo& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<TensorInfo>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }
  Eigen::Index total_size() const { return total_; }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    fail(ErrorKind::InvalidArgument, "no tensor named '" + name + "'");
  }

  bool operator==(const Manifest&) const = default;

 private:
  std::vector<TensorInfo> entries_;
  Eigen::Index total_ = 0;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Eigen::Map<MatrixX<Scalar>> tensor_view(VectorX<Scalar>& flat, const TensorInfo& info) {
  return {flat.data() + info.offset, info.rows, info.cols};
}

template <typename Scalar>
Eigen::Map<const MatrixX<Scalar>> tensor_view(const VectorX<Scalar>& flat, const TensorInfo& info) {
  return {flat.data() + info.offset, info.rows, info.cols};
}

}  // namespace edmtt
