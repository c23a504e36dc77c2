#include <gtest/gtest.h>

#include <cmath>

#include "cfdiff/adapt.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/random.hpp"
#include "cfdiff/theory.hpp"
#include "cfdiff/train.hpp"

using namespace cfdiff;
using namespace cfdiff::theory;

TEST(CosineEstimator, OrthogonalWeights) {
  const Vector x{1, 1};
  const Vector a = closest_counterfactual(Vector{1, 0}, x);
  const Vector b = closest_counterfactual(Vector{0, 1}, x);
  EXPECT_EQ(a, (Vector{0, 1}));
  EXPECT_EQ(b, (Vector{1, 0}));
  EXPECT_NEAR(cosine_from_counterfactuals(x, a, b), 0.0, 1e-15);
  EXPECT_NEAR(cosine_from_counterfactuals(x, a, a), 1.0, 1e-15);
}

TEST(CosineEstimator, DegenerateInputThrows) {
  EXPECT_THROW(cosine_from_counterfactuals(Vector{1, 1}, Vector{1, 1}, Vector{0, 1}), InvalidArgument);
  EXPECT_THROW(cosine_from_counterfactuals(Vector{1, 1}, Vector{0, 1}, Vector{0}), InvalidArgument);
}

TEST(CosineEstimator, OppositeLabelsGiveNegatedCosine) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const Vector w = random_unit(rng, 3), v = random_unit(rng, 3);
    Vector x(3);
    for (auto& c : x) c = rng.normal();
    if ((dot(w, x) > 0) == (dot(v, x) > 0)) continue;
    const double est = cosine_from_counterfactuals(x, closest_counterfactual(w, x), closest_counterfactual(v, x));
    EXPECT_NEAR(est, -dot(w, v), 1e-9);
  }
}

TEST(CosineEstimator, ExpandedFormMatchesDirectCosine) {
  Rng rng(32);
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 2 + rng.below(10);
    Vector x(d), a(d), b(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = rng.normal();
      a[i] = x[i] + rng.normal();
      b[i] = x[i] + rng.normal();
    }
    EXPECT_NEAR(cosine_from_counterfactuals(x, a, b), cosine_of_deltas(x, a, b), 1e-12);
  }
}

TEST(Bound, HandInstance) {
  const auto r = cf_change_bound(Vector{1, 1}, Vector{1, 0}, Vector{0, 1});
  EXPECT_NEAR(r.lhs, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.rhs, 4.0, 1e-15);
  const auto same = cf_change_bound(Vector{1, 1}, Vector{1, 0}, Vector{1, 0});
  EXPECT_EQ(same.lhs, 0.0);
  EXPECT_EQ(same.rhs, 0.0);
}

TEST(Bound, NonUnitWeightsThrow) {
  EXPECT_THROW(cf_change_bound(Vector{1, 1}, Vector{2, 0}, Vector{0, 1}), InvalidArgument);
  EXPECT_THROW(cf_change_bound(Vector{1, 1}, Vector{1, 0}, Vector{0, 1.0 + 1e-9}), InvalidArgument);
}

TEST(Bound, ScalesLinearlyInX) {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    const Vector w = random_unit(rng, 5), v = random_unit(rng, 5);
    Vector x(5);
    for (auto& c : x) c = rng.normal();
    Vector x2 = x;
    for (auto& c : x2) c *= 2.0;
    const auto r1 = cf_change_bound(x, w, v);
    const auto r2 = cf_change_bound(x2, w, v);
    EXPECT_NEAR(r2.rhs, 2.0 * r1.rhs, 1e-12 * (1.0 + r1.rhs));
    EXPECT_LE(r1.lhs, r1.rhs + 1e-12);
  }
}

TEST(Verify, RandomTrialsAcrossDimensions) {
  for (std::size_t d : {2u, 5u, 20u}) {
    const auto rep = verify_theorems(1000, d, 7 + d);
    EXPECT_EQ(rep.trials, 1000u);
    EXPECT_LT(rep.max_abs_error, 1e-9) << d;
    EXPECT_EQ(rep.violations, 0u) << d;
    EXPECT_GE(rep.worst_margin, -1e-12);
  }
  const auto seed_seven = verify_theorems(1000, 2, 7);
  EXPECT_LT(seed_seven.max_abs_error, 1e-9);
  EXPECT_EQ(seed_seven.violations, 0u);
}

TEST(Verify, IdenticalModelsAndDeterminism) {
  const auto one = verify_theorems(1, 3, 5, true);
  EXPECT_LT(one.max_abs_error, 1e-15);
  EXPECT_EQ(one.violations, 0u);
  const auto a = verify_theorems(200, 4, 99);
  const auto b = verify_theorems(200, 4, 99);
  EXPECT_EQ(a.max_abs_error, b.max_abs_error);
  EXPECT_EQ(a.worst_margin, b.worst_margin);
  EXPECT_EQ(a.violations, b.violations);
  EXPECT_THROW(verify_theorems(0, 3, 1), InvalidArgument);
  EXPECT_THROW(verify_theorems(10, 1, 1), InvalidArgument);
}

TEST(Probe, GaussianNbPairIsReported) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const Model h = fit(Family::gaussian_nb, blobs.batch1);
  const Model h2 = adapt(h, blobs.batch2).model;
  const auto same = nonlinear_cosine_probe(h, h, blobs.eval);
  ASSERT_GT(same.samples, 0u);
  EXPECT_LT(same.max_abs_gap, 1e-3);
  const auto diff = nonlinear_cosine_probe(h, h2, blobs.eval);
  EXPECT_GT(diff.samples, 0u);
  EXPECT_GE(diff.max_abs_gap, diff.mean_abs_gap);
}
