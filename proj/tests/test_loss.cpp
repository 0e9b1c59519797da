// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "edmtt/loss.hpp"
#include "edmtt/random.hpp"
#include "oracles.hpp"

using namespace edmtt;
using Vec = Eigen::VectorXd;

namespace {

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

double single(const Vec& a, const Vec& p, const Vec& n, double margin) {
  const std::vector<Vec> as{a}, ps{p}, ns{n};
  return triplet_loss(as, ps, ns, margin);
}

}  // namespace

TEST(TripletLoss, WorkedExamples) {
  EXPECT_NEAR(single(v2(0, 0), v2(0, 0), v2(2, 0), 1.0), 0.0, 1e-12);
  EXPECT_NEAR(single(v2(1, 1), v2(1, 1), v2(1, 1), 0.7), 0.7, 1e-12);
  // |a-p| = 5, |a-n| = 1.
  EXPECT_NEAR(single(v2(0, 0), v2(3, 4), v2(1, 0), 0.5), 4.5, 1e-12);
}

TEST(TripletLoss, MeanReduction) {
  const std::vector<Vec> a{v2(0, 0), v2(0, 0)}, p{v2(3, 4), v2(0, 0)}, n{v2(1, 0), v2(5, 0)};
  EXPECT_NEAR(triplet_loss(a, p, n, 0.5), (4.5 + 0.0) / 2.0, 1e-12);
}

TEST(TripletLoss, Errors) {
  const std::vector<Vec> empty;
  EXPECT_THROW(triplet_loss(empty, empty, empty, 1.0), Error);
  const std::vector<Vec> a{v2(0, 0)}, p{Vec::Zero(3)}, n{v2(0, 0)};
  try {
    triplet_loss(a, p, n, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  Random rng(9);
  MatrixX<double> a(5, 4), p(5, 4), n(5, 4);
  for (auto* m : {&a, &p, &n})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
  const double margin = 2.0;
  const auto g = triplet_loss_with_gradient<double>(a, p, n, margin);
  Eigen::VectorXd packed(60), analytic(60);
  packed << a.reshaped(), p.reshaped(), n.reshaped();
  analytic << g.d_anchor.reshaped(), g.d_positive.reshaped(), g.d_negative.reshaped();
  const auto check = oracle::central_difference_check(packed, analytic, [](const Eigen::VectorXd& x) {
    const MatrixX<double> aa = x.segment(0, 20).reshaped(5, 4);
    const MatrixX<double> pp = x.segment(20, 20).reshaped(5, 4);
    const MatrixX<double> nn = x.segment(40, 20).reshaped(5, 4);
    return triplet_loss_with_gradient<double>(aa, pp, nn, 2.0).loss;
  });
  EXPECT_LT(check.max_relative_error, 1e-6);
}

TEST(MseLoss, Examples) {
  const std::vector<double> a = {0.1, 0.7}, zeros = {0.0, 0.0}, one_zero = {1.0, 0.0};
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(one_zero, zeros), 0.5);
  Random rng(2);
  std::vector<double> x(100), y(100);
  for (int i = 0; i < 100; ++i) {
    x[static_cast<std::size_t>(i)] = rng.uniform();
    y[static_cast<std::size_t>(i)] = rng.uniform();
  }
  EXPECT_NEAR(mse_loss(x, y), oracle::naive_mse(x, y), 1e-12);
}

TEST(MseLoss, Errors) {
  const std::vector<double> a = {1.0}, b = {1.0, 2.0}, empty;
  try {
    mse_loss(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
  try {
    mse_loss(empty, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyBatch);
  }
}

TEST(CombinedLoss, Weighting) {
  EXPECT_NEAR(combined_loss(0.04, 0.2, 1.0, 1.0).total, 0.24, 1e-15);
  EXPECT_EQ(combined_loss(0.123, 7.5, 0.0, 1.0).total, 0.123);
  EXPECT_NEAR(combined_loss(0.1, 0.05, 2.0, 1.0).total, 0.2, 1e-15);
  const auto b = combined_loss(0.1, 0.05, 2.0, 0.3);
  EXPECT_EQ(b.mse, 0.1);
  EXPECT_EQ(b.triplet, 0.05);
  EXPECT_EQ(b.margin, 0.3);
  EXPECT_EQ(b.triplet_weight, 2.0);
}

TEST(TripletLoss, Properties) {
  Random rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 1 + static_cast<int>(rng.index(6));
    const std::size_t batch = 1 + rng.index(5);
    std::vector<Vec> a, p, n;
    for (std::size_t s = 0; s < batch; ++s) {
      for (auto* list : {&a, &p, &n}) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v(i) = rng.normal();
        list->push_back(v);
      }
    }
    const double m1 = rng.uniform(0.0, 2.0), m2 = m1 + rng.uniform(0.0, 2.0);
    const double l1 = triplet_loss(a, p, n, m1);
    EXPECT_GE(l1, 0.0);
    EXPECT_LE(l1, triplet_loss(a, p, n, m2) + 1e-12);

    // Rotation (QR of a random matrix) plus translation applied to everything.
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Vec shift(dim);
    for (int i = 0; i < dim; ++i) shift(i) = rng.normal() * 3.0;
    auto move = [&](const std::vector<Vec>& xs) {
      std::vector<Vec> out;
      for (const auto& x : xs) out.push_back(q * x + shift);
      return out;
    };
    EXPECT_NEAR(triplet_loss(move(a), move(p), move(n), m1), l1, 1e-9);

    // Self-pair: per-sample loss is max(margin - |a-n|, 0).
    const double self = triplet_loss(a, a, n, m1);
    double expected = 0.0;
    for (std::size_t s = 0; s < batch; ++s) expected += std::max(m1 - (a[s] - n[s]).norm(), 0.0);
    EXPECT_NEAR(self, expected / static_cast<double>(batch), 1e-12);
  }
}
