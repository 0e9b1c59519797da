// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "edmtt/error.hpp"
#include "edmtt/parameters.hpp"

namespace edmtt {

struct LossBreakdown {
  double mse = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  double margin = 0.0;
  double triplet_weight = 0.0;
};

/// Mean over the batch of max(|a-p| - |a-n| + margin, 0), euclidean distances.
template <typename Vec>
double triplet_loss(std::span<const Vec> anchor, std::span<const Vec> positive,
                    std::span<const Vec> negative, double margin) {
  require(!anchor.empty(), ErrorKind::EmptyBatch, "triplet loss on an empty batch");
  require(anchor.size() == positive.size() && anchor.size() == negative.size(),
          ErrorKind::DimensionMismatch, "anchor/positive/negative batch sizes differ");
  double sum = 0.0;
  for (std::size_t s = 0; s < anchor.size(); ++s) {
    require(anchor[s].size() == positive[s].size() && anchor[s].size() == negative[s].size(),
            ErrorKind::DimensionMismatch,
            "embedding dimensions differ at batch position " + std::to_string(s));
    const double d_pos = static_cast<double>((anchor[s] - positive[s]).norm());
    const double d_neg = static_cast<double>((anchor[s] - negative[s]).norm());
    sum += std::max(d_pos - d_neg + margin, 0.0);
  }
  return sum / static_cast<double>(anchor.size());
}

inline double triplet_loss(std::span<const Eigen::VectorXd> anchor,
                           std::span<const Eigen::VectorXd> positive,
                           std::span<const Eigen::VectorXd> negative, double margin) {
  return triplet_loss<Eigen::VectorXd>(anchor, positive, negative, margin);
}

template <typename Scalar>
struct TripletGradient {
  double loss = 0.0;
  MatrixX<Scalar> d_anchor, d_positive, d_negative;
};

/// Column-batched triplet loss with its gradient. A zero distance contributes
/// a zero subgradient (the anchor==positive fallback).
template <typename Scalar>
TripletGradient<Scalar> triplet_loss_with_gradient(const MatrixX<Scalar>& anchor,
                                                   const MatrixX<Scalar>& positive,
                                                   const MatrixX<Scalar>& negative, double margin) {
  require(anchor.cols() > 0, ErrorKind::EmptyBatch, "triplet loss on an empty batch");
  require(anchor.rows() == positive.rows() && anchor.rows() == negative.rows() &&
              anchor.cols() == positive.cols() && anchor.cols() == negative.cols(),
          ErrorKind::DimensionMismatch, "anchor/positive/negative shapes differ");
  const Eigen::Index batch = anchor.cols();
  const Scalar scale = Scalar(1) / static_cast<Scalar>(batch);
  TripletGradient<Scalar> out;
  out.d_anchor = MatrixX<Scalar>::Zero(anchor.rows(), batch);
  out.d_positive = MatrixX<Scalar>::Zero(anchor.rows(), batch);
  out.d_negative = MatrixX<Scalar>::Zero(anchor.rows(), batch);
  double sum = 0.0;
  for (Eigen::Index s = 0; s < batch; ++s) {
    const VectorX<Scalar> to_pos = anchor.col(s) - positive.col(s);
    const VectorX<Scalar> to_neg = anchor.col(s) - negative.col(s);
    const Scalar d_pos = to_pos.norm();
    const Scalar d_neg = to_neg.norm();
    const double hinge = static_cast<double>(d_pos - d_neg) + margin;
    if (hinge <= 0.0) continue;
    sum += hinge;
    if (d_pos > Scalar(0)) {
      const VectorX<Scalar> g = to_pos * (scale / d_pos);
      out.d_anchor.col(s) += g;
      out.d_positive.col(s) -= g;
    }
    if (d_neg > Scalar(0)) {
      const VectorX<Scalar> g = to_neg * (scale / d_neg);
      out.d_anchor.col(s) -= g;
      out.d_negative.col(s) += g;
    }
  }
  out.loss = sum / static_cast<double>(batch);
  return out;
}

inline double mse_loss(std::span<const double> prediction, std::span<const double> target) {
  require(!prediction.empty(), ErrorKind::EmptyBatch, "mse on an empty batch");
  require(prediction.size() == target.size(), ErrorKind::LengthMismatch,
          "prediction length " + std::to_string(prediction.size()) + " != target length " +
              std::to_string(target.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double diff = prediction[i] - target[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(prediction.size());
}

inline LossBreakdown combined_loss(double mse, double triplet, double triplet_weight, double margin) {
  require(mse >= 0.0 && triplet >= 0.0, ErrorKind::InvalidArgument,
          "component losses must be non-negative");
  require(triplet_weight >= 0.0, ErrorKind::InvalidArgument, "triplet weight must be >= 0");
  return {mse, triplet, mse + triplet_weight * triplet, margin, triplet_weight};
}

}  // namespace edmtt
