// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "edmtt/error.hpp"
#include "edmtt/features.hpp"
#include "edmtt/random.hpp"

namespace edmtt::synth {

/// Per-AU gain: the noiseless intensity of AU j at engagement e is alpha_j * e.
/// Order follows kActionUnitColumns.
inline constexpr std::array<double, 17> kActionUnitGain = {
    1.0, 1.2, 3.5, 1.6, 2.8, 2.2, 1.4, 1.8, 4.0, 2.5, 1.1, 2.0, 1.3, 1.7, 3.0, 2.4, 3.8};

inline constexpr std::array<double, 4> kDefaultClassProbs = {0.05, 0.10, 0.45, 0.40};

inline constexpr double kGazeWanderScale = 0.1;
inline constexpr double kRotationVarianceScale = 0.05;
inline constexpr double kMaxIntensity = 5.0;

struct SyntheticSample {
  FrameFeatureSequence sequence;  // all 29 columns, canonical order, labelled
  int raw_class = 0;
};

struct GeneratorOptions {
  std::size_t num_samples = 200;
  std::size_t frames = 300;
  std::array<double, 4> class_probs = kDefaultClassProbs;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

inline void validate(const GeneratorOptions& options) {
  double sum = 0.0;
  for (double p : options.class_probs) {
    require(p >= 0.0 && std::isfinite(p), ErrorKind::InvalidDistribution,
            "class probabilities must be finite and non-negative");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::InvalidDistribution,
          "class probabilities sum to " + std::to_string(sum) + ", expected 1");
  require(options.frames >= 100, ErrorKind::InvalidArgument, "frames must be >= 100");
  require(options.num_samples >= 1, ErrorKind::InvalidArgument, "num_samples must be >= 1");
  require(options.noise >= 0.0, ErrorKind::InvalidArgument, "noise must be >= 0");
}

inline int draw_class(const std::array<double, 4>& probs, Random& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (int k = 0; k < 3; ++k) {
    cumulative += probs[static_cast<std::size_t>(k)];
    if (u < cumulative) return k;
  }
  // Trailing zero-probability classes are never returned.
  for (int k = 3; k > 0; --k)
    if (probs[static_cast<std::size_t>(k)] > 0.0) return k;
  return 0;
}

/// Engagement e = k/3 drives the features:
///  - AU j:      clip(alpha_j * e + noise * N(0,1), 0, 5)
///  - gaze:      random walk, step (1 - e) * 0.1 * N(0,1) + noise * N(0,1)
///  - pose T:    per-sample constant + noise * N(0,1)
///  - pose R:    per-sample constant + N(0, (1 - e) * 0.05)
inline std::vector<SyntheticSample> generate(const GeneratorOptions& options) {
  validate(options);
  Random master(options.seed);
  const double sigma = options.noise;
  const auto m = static_cast<Eigen::Index>(options.frames);
  const auto names = GroupSet::all().columns();

  std::vector<SyntheticSample> out;
  out.reserve(options.num_samples);
  for (std::size_t i = 0; i < options.num_samples; ++i) {
    const int k = draw_class(options.class_probs, master);
    Random rng(master.derive_seed());
    const double e = static_cast<double>(k) / 3.0;

    SyntheticSample sample;
    sample.raw_class = k;
    auto& seq = sample.sequence;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05zu", i);
    seq.sample_id = id;
    seq.feature_names = names;
    seq.label = e;
    seq.values.resize(m, static_cast<Eigen::Index>(names.size()));

    Eigen::Index col = 0;
    const double gaze_step = (1.0 - e) * kGazeWanderScale;
    for (int eye = 0; eye < 2; ++eye) {
      const std::array<double, 3> start = {rng.uniform(-0.15, 0.15), rng.uniform(0.0, 0.25),
                                           -0.95 + rng.uniform(-0.03, 0.03)};
      for (int axis = 0; axis < 3; ++axis, ++col) {
        double g = start[static_cast<std::size_t>(axis)];
        for (Eigen::Index t = 0; t < m; ++t) {
          if (t > 0) g += gaze_step * rng.normal() + sigma * rng.normal();
          seq.values(t, col) = g;
        }
      }
    }
    const std::array<double, 3> translation = {rng.uniform(-40.0, 40.0), rng.uniform(-30.0, 30.0),
                                               rng.uniform(400.0, 700.0)};
    for (int axis = 0; axis < 3; ++axis, ++col)
      for (Eigen::Index t = 0; t < m; ++t)
        seq.values(t, col) = translation[static_cast<std::size_t>(axis)] + sigma * rng.normal();

    const double rotation_sd = std::sqrt((1.0 - e) * kRotationVarianceScale);
    const std::array<double, 3> rotation = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                            rng.uniform(-0.1, 0.1)};
    for (int axis = 0; axis < 3; ++axis, ++col)
      for (Eigen::Index t = 0; t < m; ++t)
        seq.values(t, col) = rotation[static_cast<std::size_t>(axis)] + rotation_sd * rng.normal();

    for (std::size_t j = 0; j < kActionUnitGain.size(); ++j, ++col)
      for (Eigen::Index t = 0; t < m; ++t)
        seq.values(t, col) = std::clamp(kActionUnitGain[j] * e + sigma * rng.normal(), 0.0, kMaxIntensity);

    out.push_back(std::move(sample));
  }
  return out;
}

/// Writes `<dir>/features/<id>.csv` (OpenFace layout) and `<dir>/labels.csv`.
inline std::vector<LabelEntry> write_dataset(const std::vector<SyntheticSample>& samples,
                                             const std::filesystem::path& dir) {
  const auto features = dir / "features";
  std::filesystem::create_directories(features);
  std::vector<LabelEntry> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    write_openface_csv(s.sequence, features / (s.sequence.sample_id + ".csv"));
    labels.push_back({s.sequence.sample_id, s.raw_class});
  }
  write_labels_csv(labels, dir / "labels.csv");
  return labels;
}

/// Keeps only the columns of `groups`, in canonical order.
inline FrameFeatureSequence select_groups(const FrameFeatureSequence& seq, GroupSet groups) {
  FrameFeatureSequence out;
  out.sample_id = seq.sample_id;
  out.label = seq.label;
  out.feature_names = groups.columns();
  out.values.resize(seq.frames(), static_cast<Eigen::Index>(out.feature_names.size()));
  for (std::size_t c = 0; c < out.feature_names.size(); ++c) {
    const auto it = std::find(seq.feature_names.begin(), seq.feature_names.end(), out.feature_names[c]);
    require(it != seq.feature_names.end(), ErrorKind::MissingColumn,
            seq.sample_id + ": column '" + out.feature_names[c] + "' missing");
    out.values.col(static_cast<Eigen::Index>(c)) =
        seq.values.col(static_cast<Eigen::Index>(it - seq.feature_names.begin()));
  }
  return out;
}

}  // namespace edmtt::synth
