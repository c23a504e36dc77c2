#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cfdiff/adapt.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/diff.hpp"
#include "cfdiff/random.hpp"
#include "cfdiff/train.hpp"

using namespace cfdiff;

namespace {

Vector random_vector(Rng& rng, std::size_t d) {
  Vector v(d);
  for (auto& c : v) c = rng.normal();
  return v;
}

}  // namespace

TEST(Psi, ComponentwiseExamples) {
  EXPECT_EQ(psi_compare(Vector{1, 2}, Vector{1, 2}), (Vector{0, 0}));
  EXPECT_EQ(psi_compare(Vector{-2, 0}, Vector{0, -2}), (Vector{2, 2}));
  EXPECT_EQ(psi_compare(Vector{0, 0}, Vector{3, -4}), (Vector{3, 4}));
  EXPECT_THROW(psi_compare(Vector{1}, Vector{1, 2}), InvalidArgument);
}

TEST(Psi, EuclidExamples) {
  EXPECT_EQ(psi_euclid(Vector{1, 2}, Vector{1, 2}), 0.0);
  EXPECT_NEAR(psi_euclid(Vector{-2, 0}, Vector{0, -2}), std::sqrt(8.0), 1e-12);
  EXPECT_NEAR(psi_euclid(Vector{-2, 0}, Vector{0, -2}, 1), 4.0, 1e-12);
  EXPECT_THROW(psi_euclid(Vector{1}, Vector{1, 2}), InvalidArgument);
}

TEST(Psi, CosineExamples) {
  const Vector d{0.3, -1.2, 2.0};
  Vector five = d;
  for (auto& v : five) v *= 5.0;
  EXPECT_NEAR(psi_cosine(d, five), 1.0, 1e-12);
  EXPECT_NEAR(psi_cosine(Vector{1, 0}, Vector{0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(psi_cosine(Vector{1, 0}, Vector{-1, 0}), -1.0, 1e-12);
  EXPECT_THROW(psi_cosine(Vector{0, 0}, Vector{1, 0}), InvalidArgument);
  EXPECT_THROW(psi_cosine(Vector{1, 0}, Vector{1e-13, 0}), InvalidArgument);
}

TEST(Psi, MetricProperties) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const Vector a = random_vector(rng, 4), b = random_vector(rng, 4), c = random_vector(rng, 4);
    EXPECT_EQ(psi_euclid(a, b), psi_euclid(b, a));
    EXPECT_EQ(psi_cosine(a, b), psi_cosine(b, a));
    EXPECT_LE(psi_euclid(a, c), psi_euclid(a, b) + psi_euclid(b, c) + 1e-12);
    const double s = rng.uniform(0.01, 100.0), r = rng.uniform(0.01, 100.0);
    Vector as = a, br = b;
    for (auto& v : as) v *= s;
    for (auto& v : br) v *= r;
    EXPECT_NEAR(psi_cosine(as, br), psi_cosine(a, b), 1e-12);
    const double cs = psi_cosine(a, b);
    EXPECT_GE(cs, -1.0);
    EXPECT_LE(cs, 1.0);
  }
}

TEST(ExplainDiff, SelfComparisonIsZero) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const Model h = fit(Family::gaussian_nb, blobs.batch1);
  const auto report = explain_model_differences(h, h, blobs.eval, FlipTarget{});
  ASSERT_FALSE(report.per_sample.empty());
  for (const auto& d : report.per_sample) {
    EXPECT_EQ(d.psi, Vector(2, 0.0));
    EXPECT_EQ(d.psi_euclid, 0.0);
    ASSERT_TRUE(d.psi_cosine.has_value());
    EXPECT_NEAR(*d.psi_cosine, 1.0, 1e-12);
    EXPECT_TRUE(d.both_valid);
  }
  EXPECT_EQ(report.mean_psi, Vector(2, 0.0));
  EXPECT_EQ(report.mean_abs_delta_change, Vector(2, 0.0));
}

TEST(ExplainDiff, FilterKeepsExactlyTheJointlyCorrectSamples) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const Model h = fit(Family::gaussian_nb, blobs.batch1);
  const Model h2 = adapt(h, blobs.batch2).model;
  const auto report = explain_model_differences(h, h2, blobs.eval, FlipTarget{});
  EXPECT_EQ(report.per_sample.size() + report.skipped.size(), blobs.eval.size());
  std::vector<bool> seen(blobs.eval.size(), false);
  for (const auto& d : report.per_sample) {
    const auto& x = blobs.eval.features[d.index];
    EXPECT_EQ(predict(h, x), blobs.eval.labels[d.index]);
    EXPECT_EQ(predict(h2, x), blobs.eval.labels[d.index]);
    EXPECT_EQ(d.x, x);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(d.psi[j], std::abs(d.delta_old[j] - d.delta_new[j]));
    seen[d.index] = true;
  }
  for (const auto& s : report.skipped) {
    EXPECT_FALSE(seen[s.index]);
    seen[s.index] = true;
    EXPECT_FALSE(s.reason.empty());
    const auto& x = blobs.eval.features[s.index];
    const bool both = predict(h, x) == blobs.eval.labels[s.index] && predict(h2, x) == blobs.eval.labels[s.index];
    if (both) {
      EXPECT_NE(s.reason.find("invalid"), std::string::npos) << s.reason;
    }
  }
  for (bool b : seen) EXPECT_TRUE(b);
}

TEST(ExplainDiff, BlobsShiftTheSecondFeature) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const Model h = fit(Family::gaussian_nb, blobs.batch1);
  const Model h2 = adapt(h, blobs.batch2).model;
  const auto report = explain_model_differences(h, h2, blobs.eval, FlipTarget{});
  ASSERT_GT(report.per_sample.size(), 50u);
  EXPECT_GT(report.mean_psi[1], report.mean_psi[0]);
  double m0 = 0.0, m1 = 0.0;
  for (const auto& d : report.per_sample) {
    m0 += d.psi[0];
    m1 += d.psi[1];
  }
  const double n = static_cast<double>(report.per_sample.size());
  EXPECT_NEAR(report.mean_psi[0], m0 / n, 1e-12);
  EXPECT_NEAR(report.mean_psi[1], m1 / n, 1e-12);
}

TEST(ExplainDiff, NothingJointlyCorrectGivesEmptyReport) {
  const Model h = make_linear_classifier({1, 0});
  const Model flipped = make_linear_classifier({-1, 0});
  Dataset d{{}, {}, {"a", "b"}, Task::classification};
  for (int i = 1; i <= 5; ++i) d.push_back({static_cast<double>(i), 0.0}, 1);
  const auto report = explain_model_differences(h, flipped, d, FlipTarget{});
  EXPECT_TRUE(report.per_sample.empty());
  ASSERT_EQ(report.skipped.size(), 5u);
  for (const auto& s : report.skipped) EXPECT_EQ(s.reason, "misclassified by h'");
  EXPECT_EQ(report.mean_psi, Vector(2, 0.0));
}

TEST(ExplainDiff, LinearModelsGiveClosedFormDeltas) {
  const Model h = make_linear_classifier({1, 0});
  const Model h2 = make_linear_classifier({1, 1});
  Dataset d{{}, {}, {"a", "b"}, Task::classification};
  d.push_back({2.0, 1.0}, 1);
  const auto report = explain_model_differences(h, h2, d, FlipTarget{});
  ASSERT_EQ(report.per_sample.size(), 1u);
  const auto& s = report.per_sample[0];
  EXPECT_NEAR(s.delta_old[0], -2.0, 1e-3);
  EXPECT_NEAR(s.delta_old[1], 0.0, 1e-12);
  EXPECT_NEAR(s.delta_new[0], -1.5, 1e-3);
  EXPECT_NEAR(s.delta_new[1], -1.5, 1e-3);
  ASSERT_TRUE(s.psi_cosine.has_value());
  EXPECT_NEAR(*s.psi_cosine, std::sqrt(0.5), 1e-3);
}

TEST(ExplainDiff, RegressionToleranceFiltersAndSubsetOrders) {
  const Model h = make_linear_regression({1, 0});
  const Model h2 = make_linear_regression({1, 0}, 0.5);
  Dataset d{{}, {}, {"a", "b"}, Task::regression};
  d.push_back({10, 0}, 10.0);
  d.push_back({30, 0}, 30.0);
  d.push_back({50, 0}, 0.0);
  DiffOptions opts;
  opts.regression_tolerance = 1.0;
  opts.subset = {1, 0, 2};
  const auto report = explain_model_differences(h, h2, d, IntervalTarget{20, 5}, opts);
  ASSERT_EQ(report.per_sample.size(), 2u);
  EXPECT_EQ(report.per_sample[0].index, 1u);
  EXPECT_EQ(report.per_sample[1].index, 0u);
  EXPECT_NEAR(report.per_sample[0].psi[0], 0.5, 1e-3);
  ASSERT_EQ(report.skipped.size(), 1u);
  EXPECT_EQ(report.skipped[0].index, 2u);
  opts.subset = {7};
  EXPECT_THROW(explain_model_differences(h, h2, d, IntervalTarget{20, 5}, opts), InvalidArgument);
}

TEST(ExplainDiff, IncompatibleModelsRejected) {
  Dataset d{{}, {}, {"a", "b"}, Task::classification};
  d.push_back({1, 1}, 1);
  EXPECT_THROW(explain_model_differences(make_linear_classifier({1, 0}), make_linear_classifier({1, 0, 0}), d,
                                         FlipTarget{}),
               InvalidArgument);
  EXPECT_THROW(explain_model_differences(make_linear_classifier({1, 0}), make_linear_regression({1, 0}), d,
                                         FlipTarget{}),
               InvalidArgument);
}
