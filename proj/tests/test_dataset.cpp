#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <string>

#include "cfdiff/dataset.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/train.hpp"

using namespace cfdiff;

namespace {

Dataset parse(const std::string& text, std::string_view label = "y", Task task = Task::classification) {
  std::istringstream in(text);
  return parse_csv(in, label, task);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

/// Best accuracy of any threshold rule on a single feature (either orientation).
double best_single_feature_accuracy(const Dataset& d, std::size_t feature) {
  std::vector<double> values;
  for (const auto& x : d.features) values.push_back(x[feature]);
  std::sort(values.begin(), values.end());
  double best = 0.0;
  for (std::size_t i = 0; i + 1 <= values.size(); ++i) {
    const double t = i + 1 < values.size() ? 0.5 * (values[i] + values[i + 1]) : values[i] + 1.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < d.size(); ++r) hits += (d.features[r][feature] > t) == (d.labels[r] == 1.0);
    const double acc = static_cast<double>(hits) / static_cast<double>(d.size());
    best = std::max({best, acc, 1.0 - acc});
  }
  return best;
}

}  // namespace

TEST(Csv, ParsesColumnsInOrderWithoutLabel) {
  const Dataset d = parse("a,b,y\n1,2,0\n3,4,1\n5,6,1\n");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.features[1], (Vector{3, 4}));
  EXPECT_EQ(d.labels, (std::vector<Label>{0, 1, 1}));
}

TEST(Csv, LabelColumnMayBeAnywhere) {
  const Dataset d = parse("y,a\n1,2.5\n");
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a"}));
  EXPECT_EQ(d.features[0], (Vector{2.5}));
}

TEST(Csv, Errors) {
  EXPECT_NE(error_of("a,b,z\n1,2,0\n").find("label column not found"), std::string::npos);
  EXPECT_NE(error_of("").find("empty"), std::string::npos);
  EXPECT_NE(error_of("a,y,y\n1,0,0\n").find("duplicate label column"), std::string::npos);
  const std::string e = error_of("a,b,y\n1,2,0\n3,abc,1\n");
  EXPECT_NE(e.find("row 2"), std::string::npos) << e;
  EXPECT_NE(e.find("column b"), std::string::npos) << e;
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "y", Task::classification), IoError);
}

TEST(Csv, ClassificationLabelsMustBeIntegers) {
  EXPECT_THROW(parse("a,y\n1,0.5\n"), InvalidArgument);
  EXPECT_NO_THROW(parse("a,y\n1,0.5\n", "y", Task::regression));
}

TEST(Csv, RoundTripIsExact) {
  Dataset d{{}, {}, {"u", "v"}, Task::regression};
  Rng rng(3);
  for (int i = 0; i < 50; ++i) d.push_back({rng.normal() * 1e3, rng.uniform() * 1e-7}, rng.normal());
  const Dataset back = parse(to_csv(d), "y", Task::regression);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.features[i], d.features[i]);
    EXPECT_EQ(back.labels[i], d.labels[i]);
  }
}

TEST(Split, PartitionsAtThreshold) {
  const Dataset d = parse("nox,y\n0.4,0\n0.6,1\n0.5,1\n0.7,0\n");
  const auto [lo, hi] = split_by_threshold(d, "nox", 0.5);
  EXPECT_EQ(lo.size() + hi.size(), d.size());
  EXPECT_EQ(lo.features, (std::vector<Vector>{{0.4}, {0.5}}));
  EXPECT_EQ(hi.features, (std::vector<Vector>{{0.6}, {0.7}}));
  EXPECT_EQ(hi.labels, (std::vector<Label>{1, 0}));
}

TEST(Split, AllBelowGivesFullCopyAndEmpty) {
  const Dataset d = parse("age,y\n20,0\n30,1\n");
  const auto [lo, hi] = split_by_threshold(d, "age", 35);
  EXPECT_EQ(lo.features, d.features);
  EXPECT_TRUE(hi.empty());
  EXPECT_THROW(split_by_threshold(d, "income", 1.0), InvalidArgument);
}

TEST(Split, PartitionPropertyOnRandomData) {
  Rng rng(11);
  Dataset d{{}, {}, {"a", "b"}, Task::classification};
  for (int i = 0; i < 300; ++i) d.push_back({rng.normal(), rng.normal()}, static_cast<double>(rng.below(2)));
  for (double t : {-1.0, 0.0, 0.3, 2.0}) {
    const auto [lo, hi] = split_by_threshold(d, "b", t);
    EXPECT_EQ(lo.size() + hi.size(), d.size());
    for (const auto& x : lo.features) EXPECT_LE(x[1], t);
    for (const auto& x : hi.features) EXPECT_GT(x[1], t);
  }
}

TEST(Blobs, DeterministicForFixedSeed) {
  const auto a = generate_gaussian_blobs(BlobSpec{});
  const auto b = generate_gaussian_blobs(BlobSpec{});
  EXPECT_EQ(to_csv(a.batch1), to_csv(b.batch1));
  EXPECT_EQ(to_csv(a.batch2), to_csv(b.batch2));
  EXPECT_EQ(to_csv(a.eval), to_csv(b.eval));
  BlobSpec other;
  other.seed = 43;
  EXPECT_NE(to_csv(generate_gaussian_blobs(other).batch1), to_csv(a.batch1));
}

TEST(Blobs, ShapesAndEvalBox) {
  const BlobSpec spec;
  const auto d = generate_gaussian_blobs(spec);
  EXPECT_EQ(d.batch1.size(), 200u);
  EXPECT_EQ(d.batch2.size(), 200u);
  EXPECT_EQ(d.eval.size(), 200u);
  for (const auto& x : d.eval.features) {
    EXPECT_GE(x[0], spec.eval_lo[0]);
    EXPECT_LE(x[0], spec.eval_hi[0]);
    EXPECT_GE(x[1], spec.eval_lo[1]);
    EXPECT_LE(x[1], spec.eval_hi[1]);
  }
}

TEST(Blobs, FirstBatchSeparableByFeatureOne) {
  const auto d = generate_gaussian_blobs(BlobSpec{});
  EXPECT_GE(best_single_feature_accuracy(d.batch1, 0), 0.95);
}

TEST(Blobs, SecondBatchNeedsFeatureTwo) {
  const auto d = generate_gaussian_blobs(BlobSpec{});
  EXPECT_LT(best_single_feature_accuracy(d.batch2, 0), 0.80);
  const Model lr = fit(Family::logistic_regression, d.batch2);
  EXPECT_GE(accuracy(lr, d.batch2), 0.95);
}

TEST(Blobs, InvalidSpecRejected) {
  BlobSpec s;
  s.sigma2 = 0.0;
  EXPECT_THROW(generate_gaussian_blobs(s), InvalidArgument);
}

TEST(Credit, ConceptsFollowTheAmountRule) {
  const CreditSpec spec;
  const auto d = generate_credit(spec);
  EXPECT_EQ(d.batch1.n_features(), 5u);
  for (std::size_t i = 0; i < d.batch1.size(); ++i)
    EXPECT_EQ(d.batch1.labels[i], d.batch1.features[i][0] < spec.batch1_cutoff ? 1.0 : 0.0);
  for (std::size_t i = 0; i < d.batch2.size(); ++i) {
    const double a = d.batch2.features[i][0];
    EXPECT_EQ(d.batch2.labels[i], (a < spec.batch2_cutoff || a > spec.batch2_reaccept) ? 1.0 : 0.0);
  }
  EXPECT_EQ(d.test.size(), spec.test_samples);
}
