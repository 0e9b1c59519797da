// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "edmtt/aggregate.hpp"
#include "edmtt/error.hpp"
#include "edmtt/features.hpp"
#include "edmtt/random.hpp"

namespace edmtt {

enum class EngagementClass { Low, High };

inline EngagementClass assign_engagement_class(double label) {
  require(label >= 0.0 && label <= 1.0, ErrorKind::OutOfRangeLabel,
          "label " + std::to_string(label) + " is outside [0,1]");
  return label < 0.5 ? EngagementClass::Low : EngagementClass::High;
}

/// Index triplets into a dataset; anchor_labels[s] is the anchor's label.
/// Positive and negative labels are kept so the regression loss may optionally
/// use every branch.
struct TripletBatch {
  std::vector<std::size_t> anchor;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  std::vector<double> anchor_labels;
  std::vector<double> positive_labels;
  std::vector<double> negative_labels;

  std::size_t size() const { return anchor.size(); }
};

/// Per-class membership lists, built once per dataset.
class ClassIndex {
 public:
  explicit ClassIndex(std::span<const double> labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      members_[static_cast<std::size_t>(assign_engagement_class(labels[i]))].push_back(i);
    }
    classes_.reserve(labels.size());
    for (double l : labels) classes_.push_back(assign_engagement_class(l));
  }

  const std::vector<std::size_t>& members(EngagementClass c) const {
    return members_[static_cast<std::size_t>(c)];
  }
  EngagementClass class_of(std::size_t i) const { return classes_[i]; }
  std::size_t size() const { return classes_.size(); }

 private:
  std::array<std::vector<std::size_t>, 2> members_;
  std::vector<EngagementClass> classes_;
};

/// Positive: uniform over same-class samples other than the anchor (the anchor
/// itself when it is alone in its class). Negative: uniform over the other class.
inline TripletBatch build_triplet_batch(std::span<const std::size_t> anchor_indices,
                                        std::span<const double> labels, Random& rng) {
  const ClassIndex index(labels);
  require(!index.members(EngagementClass::Low).empty() &&
              !index.members(EngagementClass::High).empty(),
          ErrorKind::DegenerateClassDistribution,
          "triplet sampling needs at least one low (<0.5) and one high (>=0.5) sample");
  TripletBatch batch;
  batch.anchor.reserve(anchor_indices.size());
  for (std::size_t a : anchor_indices) {
    require(a < labels.size(), ErrorKind::InvalidArgument,
            "anchor index " + std::to_string(a) + " out of range");
    const EngagementClass cls = index.class_of(a);
    const auto& same = index.members(cls);
    const auto& other =
        index.members(cls == EngagementClass::Low ? EngagementClass::High : EngagementClass::Low);
    std::size_t positive = a;
    if (same.size() > 1) {
      // Uniform over same \ {anchor}: skip past the anchor's slot.
      const auto slot = static_cast<std::size_t>(
          std::lower_bound(same.begin(), same.end(), a) - same.begin());
      std::size_t pick = rng.index(same.size() - 1);
      if (pick >= slot) ++pick;
      positive = same[pick];
    }
    const std::size_t negative = other[rng.index(other.size())];
    batch.anchor.push_back(a);
    batch.positive.push_back(positive);
    batch.negative.push_back(negative);
    batch.anchor_labels.push_back(labels[a]);
    batch.positive_labels.push_back(labels[positive]);
    batch.negative_labels.push_back(labels[negative]);
  }
  return batch;
}

/// Oversamples every raw class (0..3) present in `raw_classes` up to the size
/// of the largest one, then shuffles. Length = (#present classes) x max count.
inline std::vector<std::size_t> balanced_epoch_indices(std::span<const int> raw_classes,
                                                       Random& rng) {
  require(!raw_classes.empty(), ErrorKind::EmptyDataset, "no samples to balance");
  std::array<std::vector<std::size_t>, 4> members;
  for (std::size_t i = 0; i < raw_classes.size(); ++i) {
    const int c = raw_classes[i];
    require(c >= 0 && c <= 3, ErrorKind::OutOfRangeLabel,
            "raw class " + std::to_string(c) + " outside {0,1,2,3}");
    members[static_cast<std::size_t>(c)].push_back(i);
  }
  std::size_t largest = 0;
  for (const auto& m : members) largest = std::max(largest, m.size());

  std::vector<std::size_t> out;
  out.reserve(4 * largest);
  for (const auto& m : members) {
    if (m.empty()) continue;
    out.insert(out.end(), m.begin(), m.end());
    for (std::size_t k = m.size(); k < largest; ++k) out.push_back(m[rng.index(m.size())]);
  }
  rng.shuffle(out);
  return out;
}

}  // namespace edmtt
