// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "edmtt/parameters.hpp"

namespace edmtt {

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename Scalar>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Adam() = default;
  Adam(Eigen::Index size, double learning_rate)
      : learning_rate_(learning_rate),
        first_(VectorX<Scalar>::Zero(size)),
        second_(VectorX<Scalar>::Zero(size)) {}

  void step(VectorX<Scalar>& params, const VectorX<Scalar>& grad) {
    ++steps_;
    first_ = Scalar(kBeta1) * first_ + Scalar(1 - kBeta1) * grad;
    second_ = Scalar(kBeta2) * second_ + Scalar(1 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
    const auto step_size = static_cast<Scalar>(learning_rate_ / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    params.array() -= step_size * first_.array() /
                      ((second_.array() * inv_c2).sqrt() + static_cast<Scalar>(kEpsilon));
  }

  double learning_rate() const { return learning_rate_; }
  std::uint64_t steps() const { return steps_; }
  VectorX<Scalar>& first_moment() { return first_; }
  const VectorX<Scalar>& first_moment() const { return first_; }
  VectorX<Scalar>& second_moment() { return second_; }
  const VectorX<Scalar>& second_moment() const { return second_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  double learning_rate_ = 0.0;
  std::uint64_t steps_ = 0;
  VectorX<Scalar> first_;
  VectorX<Scalar> second_;
};

/// Rescales `grad` in place so its euclidean norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename Scalar>
double clip_global_norm(VectorX<Scalar>& grad, double max_norm) {
  const double norm = static_cast<double>(grad.norm());
  if (max_norm > 0.0 && norm > max_norm) grad *= static_cast<Scalar>(max_norm / norm);
  return norm;
}

}  // namespace edmtt
