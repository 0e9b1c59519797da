// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "edmtt/checkpoint.hpp"
#include "edmtt/model.hpp"
#include "edmtt/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace edmtt;

namespace {

ModelConfig tiny_config(int hidden = 4, int layers = 1, int windows = 3, int width = 5) {
  ModelConfig c;
  c.num_recurrent_layers = layers;
  c.hidden_size = hidden;
  c.fc_sizes = {4, 2};
  c.window_count = windows;
  c.feature_dim = width;
  c.seed = 17;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "edmtt_model_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Model, EmbeddingLengthIsTwiceHidden) {
  auto config = tiny_config(1024, 1, 2, 5);
  const auto model = EdmttModel<float>::initialize(config);
  const auto data = oracle::random_aggregated(2, 2, 5, 1);
  const auto emb = model.embed(data);
  ASSERT_EQ(emb.size(), 2u);
  EXPECT_EQ(emb[0].size(), 2048);
}

TEST(Model, SmokeHiddenThree) {
  const auto model = EdmttModel<double>::initialize(tiny_config(3, 1, 2, 5));
  const auto data = oracle::random_aggregated(1, 2, 5, 2);
  const auto emb = model.embed(data);
  ASSERT_EQ(emb[0].size(), 6);
  EXPECT_TRUE(emb[0].allFinite());
}

TEST(Model, SearchGridEmbeddingLengths) {
  SearchSpace space;
  for (std::size_t i = 0; i < space.size(); ++i) {
    auto c = space.point(i, tiny_config());
    EXPECT_EQ(c.embedding_size(), 2 * c.hidden_size);
  }
  // Build and run the smaller grid points for real.
  const auto data = oracle::random_aggregated(2, 3, 5, 3);
  for (int layers : space.layers) {
    for (int hidden : {128, 256}) {
      auto c = tiny_config(hidden, layers);
      const auto emb = EdmttModel<float>::initialize(c).embed(data);
      EXPECT_EQ(emb[1].size(), 2 * hidden);
    }
  }
}

TEST(Model, ShapeMismatch) {
  const auto model = EdmttModel<double>::initialize(tiny_config());
  const auto data = oracle::random_aggregated(1, 4, 5, 2);
  try {
    model.predict_engagement(data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Model, NonFiniteActivationDetected) {
  auto model = EdmttModel<double>::initialize(tiny_config());
  model.parameters()(model.manifest()[model.manifest().find("head.fc1.bias")].offset) =
      std::numeric_limits<double>::quiet_NaN();
  const auto data = oracle::random_aggregated(1, 3, 5, 2);
  try {
    model.predict_engagement(data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteActivation);
  }
}

TEST(Model, PredictionsInOpenUnitIntervalAndOrderPreserving) {
  const auto model = EdmttModel<double>::initialize(tiny_config(6, 2, 4, 5));
  auto data = oracle::random_aggregated(9, 4, 5, 4);
  const auto pred = model.predict_engagement(data);
  ASSERT_EQ(pred.size(), 9u);
  for (double p : pred) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  Random rng(5);
  rng.shuffle(perm);
  std::vector<AggregatedSequence> permuted;
  for (auto i : perm) permuted.push_back(data[i]);
  const auto pred_perm = model.predict_engagement(permuted);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(pred_perm[k], pred[perm[k]], 1e-14);
  // Single-sample batches agree with the batched pass.
  for (std::size_t k = 0; k < 9; ++k)
    EXPECT_NEAR(model.predict_engagement(std::span(&data[k], 1))[0], pred[k], 1e-14);
}

TEST(Model, WeightSharingAcrossBranches) {
  const auto model = EdmttModel<double>::initialize(tiny_config(5, 2, 3, 5));
  const auto data = oracle::random_aggregated(4, 3, 5, 6);
  // Every branch carries the same samples; the triplet loss reduces to the margin.
  TripletBatch batch;
  batch.anchor = batch.positive = batch.negative = {0, 1, 2, 3};
  batch.anchor_labels = batch.positive_labels = batch.negative_labels = labels_of(data);
  const auto r = compute_objective(model, data, batch, Mode::Train);
  EXPECT_EQ(r.branches[0].embedding, r.branches[1].embedding);
  EXPECT_EQ(r.branches[0].embedding, r.branches[2].embedding);
  EXPECT_EQ(r.branches[0].prediction, r.branches[2].prediction);
  EXPECT_DOUBLE_EQ(r.loss.triplet, 1.0);
}

TEST(Model, DeterministicInitialisation) {
  const auto a = EdmttModel<double>::initialize(tiny_config());
  const auto b = EdmttModel<double>::initialize(tiny_config());
  EXPECT_EQ(a.parameters(), b.parameters());
  auto other = tiny_config();
  other.seed = 18;
  EXPECT_NE(EdmttModel<double>::initialize(other).parameters(), a.parameters());
}

class GradientCheckTest : public ::testing::TestWithParam<double> {};

TEST_P(GradientCheckTest, AnalyticMatchesCentralDifferences) {
  auto config = tiny_config();
  config.margin = 0.5;
  config.triplet_weight = GetParam();
  const auto model = EdmttModel<double>::initialize(config);
  auto data = oracle::random_aggregated(8, 3, 5, 7);
  std::vector<double> labels;
  for (const auto& s : data) labels.push_back(*s.label);
  Random rng(3);
  const std::vector<std::size_t> anchors = {0, 1, 2, 3, 5, 6};
  const auto batch = build_triplet_batch(anchors, labels, rng);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameters().size());
  const auto base = compute_objective(model, data, batch, Mode::Train, &grad);
  if (config.triplet_weight > 0) EXPECT_GT(base.loss.triplet, 0.0);
  auto probe = model;
  const auto check = oracle::central_difference_check(
      model.parameters(), grad, [&](const Eigen::VectorXd& params) {
        probe.parameters() = params;
        return compute_objective(probe, data, batch, Mode::Train).loss.total;
      });
  EXPECT_LT(check.max_relative_error, 1e-4)
      << "worst " << check.worst_index << " analytic " << check.worst_analytic << " numeric "
      << check.worst_numeric;
}

INSTANTIATE_TEST_SUITE_P(TripletWeights, GradientCheckTest, ::testing::Values(0.0, 1.0));

TEST(Checkpoint, RoundTripIsExact) {
  auto model = EdmttModel<double>::initialize(tiny_config(5, 2, 3, 5));
  model.running_mean().setConstant(0.25);
  model.running_var().setConstant(1.5);
  const auto path = scratch("roundtrip.ckpt");
  save_model(model, path, {{"feature_groups", "gaze,aus"}});
  nlohmann::json meta;
  const auto loaded = load_model<double>(path, &meta);
  EXPECT_EQ(loaded.parameters(), model.parameters());
  EXPECT_EQ(loaded.running_mean(), model.running_mean());
  EXPECT_EQ(loaded.running_var(), model.running_var());
  EXPECT_EQ(loaded.config(), model.config());
  EXPECT_EQ(meta.at("feature_groups"), "gaze,aus");
  const auto data = oracle::random_aggregated(3, 3, 5, 8);
  EXPECT_EQ(loaded.predict_engagement(data), model.predict_engagement(data));
  // Float checkpoints load into double models without loss.
  auto small = EdmttModel<float>::initialize(tiny_config());
  save_model(small, path);
  EXPECT_EQ(load_model<double>(path).parameters(), small.parameters().cast<double>());
}

TEST(Checkpoint, TruncatedFile) {
  const auto model = EdmttModel<double>::initialize(tiny_config());
  const auto path = scratch("truncated.ckpt");
  save_model(model, path);
  fs::resize_file(path, fs::file_size(path) - 7);
  try {
    load_model<double>(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptCheckpoint);
  }
  fs::resize_file(path, 10);
  EXPECT_THROW(load_model<double>(path), Error);
}

TEST(Checkpoint, FlippedPayloadByteFailsChecksum) {
  const auto model = EdmttModel<double>::initialize(tiny_config());
  const auto path = scratch("flipped.ckpt");
  save_model(model, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-5, std::ios::end);
    f.put('\x7f');
  }
  try {
    load_model<double>(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptCheckpoint);
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Checkpoint, UnsupportedVersion) {
  const auto model = EdmttModel<double>::initialize(tiny_config());
  const auto path = scratch("future.ckpt");
  CheckpointData data;
  append_model_arrays(model, data);
  write_checkpoint(path, data, 9999);
  try {
    load_model<double>(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedVersion);
  }
}
