// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "edmtt/error.hpp"
#include "edmtt/features.hpp"

namespace edmtt {

inline constexpr std::array<std::string_view, 5> kStatisticNames = {"mean", "var", "std", "min",
                                                                    "max"};
inline constexpr int kStatisticsPerFeature = 5;

enum class ShortPolicy { Error, PadRepeatLast };

/// Window statistics for one sample: a windows by b = 5n statistic columns.
/// Columns are grouped per feature: [f0.mean f0.var f0.std f0.min f0.max f1.mean ...].
struct AggregatedSequence {
  std::string sample_id;
  Eigen::MatrixXd values;  // a x b
  Eigen::Index frames_per_window = 0;
  std::vector<std::string> stat_names;
  std::optional<double> label;

  Eigen::Index windows() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }
};

inline AggregatedSequence aggregate_windows(const FrameFeatureSequence& seq, Eigen::Index window_count,
                                            ShortPolicy short_policy = ShortPolicy::Error) {
  require(window_count >= 1, ErrorKind::InvalidArgument, "window count must be >= 1");
  require(seq.frames() >= 1 && seq.features() >= 1, ErrorKind::EmptySequence,
          seq.sample_id + ": empty feature matrix");

  const Eigen::Index n = seq.features();
  Eigen::MatrixXd frames = seq.values;
  if (frames.rows() < window_count) {
    require(short_policy == ShortPolicy::PadRepeatLast, ErrorKind::SequenceTooShort,
            seq.sample_id + ": " + std::to_string(frames.rows()) + " frames < " +
                std::to_string(window_count) + " windows");
    const Eigen::Index have = frames.rows();
    frames.conservativeResize(window_count, Eigen::NoChange);
    for (Eigen::Index r = have; r < window_count; ++r) frames.row(r) = seq.values.row(have - 1);
  }
  const Eigen::Index z = frames.rows() / window_count;

  AggregatedSequence out;
  out.sample_id = seq.sample_id;
  out.label = seq.label;
  out.frames_per_window = z;
  out.values.resize(window_count, kStatisticsPerFeature * n);
  for (Eigen::Index w = 0; w < window_count; ++w) {
    const auto block = frames.middleRows(w * z, z);
    for (Eigen::Index f = 0; f < n; ++f) {
      const auto col = block.col(f);
      const double mean = col.mean();
      // Two-pass population variance; clamp guards the sqrt against -0.
      const double variance = std::max(0.0, (col.array() - mean).square().sum() / static_cast<double>(z));
      out.values(w, kStatisticsPerFeature * f + 0) = mean;
      out.values(w, kStatisticsPerFeature * f + 1) = variance;
      out.values(w, kStatisticsPerFeature * f + 2) = std::sqrt(variance);
      out.values(w, kStatisticsPerFeature * f + 3) = col.minCoeff();
      out.values(w, kStatisticsPerFeature * f + 4) = col.maxCoeff();
    }
  }
  out.stat_names.reserve(static_cast<std::size_t>(kStatisticsPerFeature * n));
  for (Eigen::Index f = 0; f < n; ++f) {
    const std::string base = f < static_cast<Eigen::Index>(seq.feature_names.size())
                                 ? seq.feature_names[static_cast<std::size_t>(f)]
                                 : "f" + std::to_string(f);
    for (auto stat : kStatisticNames) out.stat_names.push_back(base + "." + std::string(stat));
  }
  return out;
}

inline std::vector<AggregatedSequence> aggregate_all(const std::vector<FrameFeatureSequence>& seqs,
                                                     Eigen::Index window_count,
                                                     ShortPolicy short_policy = ShortPolicy::Error) {
  std::vector<AggregatedSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(aggregate_windows(s, window_count, short_policy));
  return out;
}

}  // namespace edmtt
