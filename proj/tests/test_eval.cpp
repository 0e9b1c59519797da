// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "edmtt/eval.hpp"
#include "edmtt/synthdata.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace edmtt;

TEST(Quantiles, InclusiveInterpolation) {
  const std::vector<double> v = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_inclusive(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_inclusive(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_inclusive(v, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_inclusive(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_inclusive(v, 1.0), 4.0);
  const std::vector<double> one = {0.7};
  EXPECT_DOUBLE_EQ(quantile_inclusive(one, 0.25), 0.7);
}

TEST(Report, PerfectPredictor) {
  std::vector<double> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(map_raw_label(i % 4));
  const auto report = make_report(labels, labels);
  EXPECT_EQ(report.mse, 0.0);
  ASSERT_EQ(report.per_class.size(), 4u);
  for (const auto& [cls, s] : report.per_class) {
    EXPECT_EQ(s.count, 3u);
    for (double v : {s.median, s.q1, s.q3, s.min, s.max}) EXPECT_EQ(v, map_raw_label(cls));
  }
}

TEST(Report, ConstantHalfPredictor) {
  std::vector<double> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(map_raw_label(i % 4));
  const std::vector<double> half(8, 0.5);
  // (0.25 + 1/36 + 1/36 + 0.25) / 4
  EXPECT_NEAR(make_report(half, labels).mse, (0.25 + 1.0 / 36 + 1.0 / 36 + 0.25) / 4, 1e-15);
  EXPECT_NEAR(make_report(half, labels).mse, 0.1389, 1e-4);
}

TEST(Report, InvariantsAndJsonRoundTrip) {
  Random rng(3);
  std::vector<double> pred, labels;
  for (int i = 0; i < 41; ++i) {
    labels.push_back(map_raw_label(static_cast<int>(rng.index(4))));
    pred.push_back(rng.uniform());
  }
  const auto report = make_report(pred, labels);
  std::size_t total = 0;
  for (const auto& [cls, s] : report.per_class) {
    EXPECT_LE(s.min, s.q1);
    EXPECT_LE(s.q1, s.median);
    EXPECT_LE(s.median, s.q3);
    EXPECT_LE(s.q3, s.max);
    total += s.count;
  }
  EXPECT_EQ(total, 41u);
  EXPECT_EQ(report.mse, mse_loss(pred, labels));
  const nlohmann::json j = report;
  const auto text = j.dump(2);
  EXPECT_EQ(nlohmann::json::parse(text).get<EvalReport>(), report);
}

TEST(Evaluate, MatchesMseLossOnModelPredictions) {
  ModelConfig c;
  c.num_recurrent_layers = 1;
  c.hidden_size = 4;
  c.fc_sizes = {4, 2};
  c.window_count = 3;
  c.feature_dim = 5;
  const auto model = EdmttModel<double>::initialize(c);
  const auto data = oracle::random_aggregated(10, 3, 5, 4);
  const auto report = evaluate(model, data);
  const auto pred = model.predict_engagement(data);
  std::vector<double> labels;
  for (const auto& s : data) labels.push_back(*s.label);
  EXPECT_EQ(report.mse, mse_loss(pred, labels));
  EXPECT_EQ(evaluate(model, data), report);
  EXPECT_THROW(evaluate(model, std::span<const AggregatedSequence>{}), Error);
}

TEST(Ablation, MaskTableOrder) {
  const auto& masks = ablation_masks();
  const std::vector<std::uint8_t> expected = {0b0001, 0b0010, 0b0100, 0b1000, 0b1100, 0b0110,
                                              0b0101, 0b0011, 0b0111, 0b1101, 0b1011, 0b1111};
  ASSERT_EQ(masks.size(), expected.size());
  for (std::size_t i = 0; i < masks.size(); ++i) EXPECT_EQ(masks[i].bits(), expected[i]) << i;
}

TEST(Ablation, ActionUnitsOnlyPipelineDimensions) {
  const auto dir = fs::temp_directory_path() / "edmtt_eval_ablation";
  fs::remove_all(dir);
  synth::GeneratorOptions g;
  g.num_samples = 12;
  g.frames = 120;
  g.class_probs = {0.25, 0.25, 0.25, 0.25};
  g.seed = 3;
  const auto labels = synth::write_dataset(synth::generate(g), dir);
  PipelineInputs inputs;
  inputs.features_dir = dir / "features";
  std::tie(inputs.train_labels, inputs.val_labels) = split_train_validation(labels, 0.25, 1);
  EXPECT_EQ(inputs.val_labels.size(), 3u);
  const auto data = prepare_data(inputs, {FeatureGroup::ActionUnits}, 10);
  EXPECT_EQ(data.train.front().values.cols(), 85);
  EXPECT_EQ(data.train.front().values.rows(), 10);

  ModelConfig base;
  base.num_recurrent_layers = 1;
  base.hidden_size = 4;
  base.fc_sizes = {4, 2};
  base.window_count = 10;
  base.feature_dim = 1;  // replaced per mask
  base.epochs = 1;
  base.learning_rate = 1e-2;
  const std::vector<GroupSet> masks = {GroupSet{FeatureGroup::ActionUnits}, GroupSet::all()};
  const auto rows = ablate<double>(masks, inputs, base);
  ASSERT_EQ(rows.size(), 2u);
  write_ablation_csv(rows, dir / "ablation.csv");
  std::ifstream in(dir / "ablation.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "gaze,pose,rotation,aus,val_mse");
  EXPECT_EQ(first.substr(0, 8), "0,0,0,1,");

  const std::vector<GroupSet> bad = {GroupSet{}};
  try {
    ablate<double>(bad, inputs, base);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}
