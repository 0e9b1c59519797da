// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "edmtt/sampler.hpp"

using namespace edmtt;

TEST(EngagementClass, Threshold) {
  EXPECT_EQ(assign_engagement_class(0.49), EngagementClass::Low);
  EXPECT_EQ(assign_engagement_class(0.5), EngagementClass::High);
  EXPECT_EQ(assign_engagement_class(0.0), EngagementClass::Low);
  EXPECT_EQ(assign_engagement_class(1.0), EngagementClass::High);
  EXPECT_EQ(assign_engagement_class(1.0 / 3.0), EngagementClass::Low);
  EXPECT_EQ(assign_engagement_class(2.0 / 3.0), EngagementClass::High);
  EXPECT_THROW(assign_engagement_class(-0.01), Error);
  EXPECT_THROW(assign_engagement_class(1.5), Error);
}

TEST(TripletBatch, ForcedMembership) {
  const std::vector<double> labels = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};  // A B C D
  Random rng(1);
  const std::vector<std::size_t> anchors(50, 0);
  const auto batch = build_triplet_batch(anchors, labels, rng);
  std::set<std::size_t> negatives;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    EXPECT_EQ(batch.positive[s], 1u);
    EXPECT_TRUE(batch.negative[s] == 2u || batch.negative[s] == 3u);
    negatives.insert(batch.negative[s]);
    EXPECT_EQ(batch.anchor_labels[s], 0.0);
  }
  EXPECT_EQ(negatives.size(), 2u);
}

TEST(TripletBatch, SingletonClassFallsBackToSelfPair) {
  const std::vector<double> labels = {0.0, 2.0 / 3.0, 1.0, 1.0};
  Random rng(2);
  const std::vector<std::size_t> anchors = {0, 0, 0};
  const auto batch = build_triplet_batch(anchors, labels, rng);
  for (std::size_t s = 0; s < batch.size(); ++s) EXPECT_EQ(batch.positive[s], 0u);
}

TEST(TripletBatch, DegenerateDistribution) {
  const std::vector<double> labels = {2.0 / 3.0, 1.0, 1.0};
  Random rng(3);
  const std::vector<std::size_t> anchors = {0};
  try {
    build_triplet_batch(anchors, labels, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateClassDistribution);
  }
}

TEST(TripletBatch, NeverPairsAnchorWithItselfWhenAvoidable) {
  Random data_rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> labels;
    const std::size_t n = 2 + data_rng.index(30);
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<double>(data_rng.index(4)) / 3.0);
    labels[0] = 0.0;
    labels[1] = 1.0;
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < 40; ++i) anchors.push_back(data_rng.index(n));
    Random rng(static_cast<std::uint64_t>(trial));
    const auto batch = build_triplet_batch(anchors, labels, rng);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto cls = assign_engagement_class(labels[batch.anchor[s]]);
      EXPECT_EQ(assign_engagement_class(labels[batch.positive[s]]), cls);
      EXPECT_NE(assign_engagement_class(labels[batch.negative[s]]), cls);
      std::size_t same = 0;
      for (double l : labels) same += assign_engagement_class(l) == cls;
      if (same > 1) EXPECT_NE(batch.positive[s], batch.anchor[s]);
    }
  }
}

TEST(TripletBatch, SeedDeterminism) {
  std::vector<double> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(static_cast<double>(i % 4) / 3.0);
  std::vector<std::size_t> anchors(16);
  std::iota(anchors.begin(), anchors.end(), 0);
  Random a(7), b(7), c(8);
  const auto ba = build_triplet_batch(anchors, labels, a);
  const auto bb = build_triplet_batch(anchors, labels, b);
  const auto bc = build_triplet_batch(anchors, labels, c);
  EXPECT_EQ(ba.positive, bb.positive);
  EXPECT_EQ(ba.negative, bb.negative);
  EXPECT_TRUE(ba.positive != bc.positive || ba.negative != bc.negative);
}

TEST(BalancedSampler, AlreadyBalanced) {
  const std::vector<int> classes = {0, 0, 1, 1, 2, 2, 3, 3};
  Random rng(1);
  const auto idx = balanced_epoch_indices(classes, rng);
  ASSERT_EQ(idx.size(), 8u);
  std::vector<std::size_t> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(BalancedSampler, Oversampling) {
  const std::vector<int> classes = {0, 1, 2, 3, 3, 3, 3, 3};
  Random rng(2);
  const auto idx = balanced_epoch_indices(classes, rng);
  ASSERT_EQ(idx.size(), 20u);
  std::map<int, int> counts;
  for (auto i : idx) ++counts[classes[i]];
  for (int c = 0; c < 4; ++c) EXPECT_EQ(counts[c], 5);
  EXPECT_EQ(std::count(idx.begin(), idx.end(), 0u), 5);
}

TEST(BalancedSampler, EqualCountsOnRandomData) {
  Random data_rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> classes;
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0, n = 1 + data_rng.index(20); k < n; ++k) classes.push_back(c);
    data_rng.shuffle(classes);
    Random rng(static_cast<std::uint64_t>(trial));
    const auto idx = balanced_epoch_indices(classes, rng);
    EXPECT_EQ(idx.size() % 4, 0u);
    std::map<int, std::size_t> counts;
    for (auto i : idx) ++counts[classes[i]];
    for (int c = 1; c < 4; ++c) EXPECT_EQ(counts[c], counts[0]);
  }
}

TEST(BalancedSampler, Empty) {
  Random rng(1);
  try {
    balanced_epoch_indices(std::vector<int>{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}
