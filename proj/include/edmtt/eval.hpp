// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edmtt/aggregate.hpp"
#include "edmtt/error.hpp"
#include "edmtt/features.hpp"
#include "edmtt/loss.hpp"
#include "edmtt/model.hpp"
#include "edmtt/random.hpp"
#include "edmtt/train.hpp"

namespace edmtt {

/// Box-plot summary of the predictions for one ground-truth class.
struct ClassSummary {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const ClassSummary&) const = default;
};

struct EvalReport {
  double mse = 0.0;
  std::map<int, ClassSummary> per_class;  // keyed by raw class 0..3 (value = raw/3)

  bool operator==(const EvalReport&) const = default;
};

/// Quantile of sorted data by linear interpolation between closest ranks,
/// position q*(n-1) (the "inclusive" convention).
inline double quantile_inclusive(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorKind::EmptyDataset, "quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline ClassSummary summarize(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {values.size(),
          quantile_inclusive(values, 0.5),
          quantile_inclusive(values, 0.25),
          quantile_inclusive(values, 0.75),
          values.front(),
          values.back()};
}

/// Report from precomputed predictions; shares mse_loss with training.
inline EvalReport make_report(std::span<const double> predictions, std::span<const double> labels) {
  require(!predictions.empty(), ErrorKind::EmptyDataset, "evaluation set is empty");
  EvalReport report;
  report.mse = mse_loss(predictions, labels);
  std::map<int, std::vector<double>> grouped;
  for (std::size_t i = 0; i < labels.size(); ++i) grouped[raw_class_of(labels[i])].push_back(predictions[i]);
  for (auto& [cls, values] : grouped) report.per_class[cls] = summarize(std::move(values));
  return report;
}

template <typename Scalar>
EvalReport evaluate(const EdmttModel<Scalar>& model, std::span<const AggregatedSequence> dataset) {
  require(!dataset.empty(), ErrorKind::EmptyDataset, "evaluation set is empty");
  const auto predictions = model.predict_engagement(dataset);
  const auto labels = labels_of(dataset);
  return make_report(predictions, labels);
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [cls, s] : r.per_class) {
    classes.push_back({{"raw_class", cls},
                       {"label", map_raw_label(cls)},
                       {"display_label", std::round(map_raw_label(cls) * 100.0) / 100.0},
                       {"count", s.count},
                       {"median", s.median},
                       {"q1", s.q1},
                       {"q3", s.q3},
                       {"min", s.min},
                       {"max", s.max}});
  }
  j = {{"mse", r.mse}, {"per_class", classes}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r = {};
  r.mse = j.at("mse").get<double>();
  for (const auto& c : j.at("per_class")) {
    r.per_class[c.at("raw_class").get<int>()] = {
        c.at("count").get<std::size_t>(), c.at("median").get<double>(), c.at("q1").get<double>(),
        c.at("q3").get<double>(),         c.at("min").get<double>(),    c.at("max").get<double>()};
  }
}

/// Feature-set rows in the order of the published ablation table
/// (gaze, pose, rotation, aus).
inline const std::array<GroupSet, 12>& ablation_masks() {
  using G = FeatureGroup;
  static const std::array<GroupSet, 12> masks = {
      GroupSet{G::EyeGaze},
      GroupSet{G::HeadPose},
      GroupSet{G::HeadRotation},
      GroupSet{G::ActionUnits},
      GroupSet{G::HeadRotation, G::ActionUnits},
      GroupSet{G::HeadPose, G::HeadRotation},
      GroupSet{G::EyeGaze, G::HeadRotation},
      GroupSet{G::EyeGaze, G::HeadPose},
      GroupSet{G::EyeGaze, G::HeadPose, G::HeadRotation},
      GroupSet{G::EyeGaze, G::HeadRotation, G::ActionUnits},
      GroupSet{G::EyeGaze, G::HeadPose, G::ActionUnits},
      GroupSet::all(),
  };
  return masks;
}

/// Seeded shuffle then split; `val_fraction` of the entries (at least one)
/// go to validation.
inline std::pair<std::vector<LabelEntry>, std::vector<LabelEntry>> split_train_validation(
    std::vector<LabelEntry> entries, double val_fraction, std::uint64_t seed) {
  require(entries.size() >= 2, ErrorKind::EmptyDataset, "need at least two samples to split");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::InvalidArgument,
          "validation fraction must be in (0,1)");
  Random rng(seed);
  rng.shuffle(entries);
  auto val_count = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(entries.size())));
  val_count = std::clamp<std::size_t>(val_count, 1, entries.size() - 1);
  std::vector<LabelEntry> val(entries.end() - static_cast<std::ptrdiff_t>(val_count), entries.end());
  entries.resize(entries.size() - val_count);
  return {std::move(entries), std::move(val)};
}

/// Everything needed to rebuild the data pipeline for one feature mask.
struct PipelineInputs {
  std::filesystem::path features_dir;
  std::vector<LabelEntry> train_labels;
  std::vector<LabelEntry> val_labels;
  double min_confidence = 0.75;
  ShortPolicy short_policy = ShortPolicy::Error;
};

struct PreparedData {
  std::vector<AggregatedSequence> train;
  std::vector<AggregatedSequence> val;
};

inline PreparedData prepare_data(const PipelineInputs& inputs, GroupSet groups, int window_count) {
  PreparedData out;
  out.train = aggregate_all(load_labelled_sequences(inputs.features_dir, inputs.train_labels, groups,
                                                    inputs.min_confidence),
                            window_count, inputs.short_policy);
  out.val = aggregate_all(load_labelled_sequences(inputs.features_dir, inputs.val_labels, groups,
                                                  inputs.min_confidence),
                          window_count, inputs.short_policy);
  return out;
}

struct AblationRow {
  GroupSet groups;
  double val_mse = 0.0;
};

/// ingest -> aggregate -> train -> evaluate for every mask, one shared seed.
template <typename Scalar>
std::vector<AblationRow> ablate(std::span<const GroupSet> masks, const PipelineInputs& inputs,
                                const ModelConfig& base,
                                const std::function<void(const AblationRow&)>& on_row = {}) {
  for (const auto& mask : masks)
    require(!mask.empty(), ErrorKind::InvalidArgument, "ablation mask selects no feature group");
  std::vector<AblationRow> rows;
  for (const auto& mask : masks) {
    const PreparedData data = prepare_data(inputs, mask, base.window_count);
    ModelConfig config = base;
    config.feature_dim = static_cast<int>(kStatisticsPerFeature * mask.column_count());
    const auto run = train<Scalar>(data.train, data.val, config);
    rows.push_back({mask, evaluate(run.model, data.val).mse});
    if (on_row) on_row(rows.back());
  }
  return rows;
}

inline void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write ablation table " + path.string());
  out << "gaze,pose,rotation,aus,val_mse\n";
  out.precision(17);
  for (const auto& r : rows) {
    for (auto g : kAllGroups) out << (r.groups.contains(g) ? 1 : 0) << ',';
    out << r.val_mse << '\n';
  }
}

}  // namespace edmtt
