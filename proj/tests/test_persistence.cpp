#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cfdiff/adapt.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/persistence.hpp"
#include "cfdiff/random.hpp"
#include "cfdiff/train.hpp"

using namespace cfdiff;

namespace {

double norm_of(const Vector& v, BallNorm n) {
  double out = 0.0;
  for (double c : v) {
    if (n == BallNorm::l1) out += std::abs(c);
    if (n == BallNorm::l2) out += c * c;
    if (n == BallNorm::linf) out = std::max(out, std::abs(c));
  }
  return n == BallNorm::l2 ? std::sqrt(out) : out;
}

bool params_equal(const Model& a, const Model& b) {
  if (a.family != b.family) return false;
  if (is_linear(a.family)) return a.linear().w == b.linear().w && a.linear().b == b.linear().b;
  if (a.family == Family::gaussian_nb) {
    const auto &p = a.gnb(), &q = b.gnb();
    if (p.classes.size() != q.classes.size()) return false;
    for (std::size_t c = 0; c < p.classes.size(); ++c)
      if (p.classes[c].mass != q.classes[c].mass || p.classes[c].mean != q.classes[c].mean ||
          p.classes[c].var != q.classes[c].var)
        return false;
    return true;
  }
  const auto &p = a.tree().nodes, &q = b.tree().nodes;
  if (p.size() != q.size()) return false;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i].feature != q[i].feature || p[i].threshold != q[i].threshold || p[i].label != q[i].label) return false;
  return true;
}

struct Instance {
  Model h;
  Dataset batch2;
  std::vector<PersistenceConstraint> constraints;
};

/// Logistic model on blob batch 1; the constraints freeze its labels on the
/// batch-1 rows whose prediction plain adaptation to batch 2 would change.
Instance logistic_instance() {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  Instance in{fit(Family::logistic_regression, blobs.batch1), blobs.batch2, {}};
  const Model plain = adapt(in.h, blobs.batch2).model;
  for (std::size_t i = 0; i < blobs.batch1.size(); ++i) {
    const auto& x = blobs.batch1.features[i];
    if (predict(plain, x) != predict(in.h, x))
      in.constraints.push_back({x, predict(in.h, x), ConstraintKind::robustness_shift, static_cast<std::int64_t>(i)});
  }
  return in;
}

}  // namespace

TEST(Ball, SamplesStayInsideTheBall) {
  for (BallNorm n : {BallNorm::l1, BallNorm::l2, BallNorm::linf}) {
    Rng rng(3);
    for (std::size_t d : {1u, 2u, 5u}) {
      for (int i = 0; i < 2000; ++i) {
        const Vector v = sample_ball(rng, d, n, 1.5);
        ASSERT_EQ(v.size(), d);
        EXPECT_LE(norm_of(v, n), 1.5 + 1e-12);
      }
    }
  }
}

TEST(Ball, RadialMassMatchesUniformDistribution) {
  // Uniform in a d-dimensional ball: P(||v|| <= r/2) = 2^-d for every norm.
  const int n = 40000;
  for (BallNorm norm : {BallNorm::l1, BallNorm::l2, BallNorm::linf}) {
    for (std::size_t d : {2u, 3u}) {
      Rng rng(17);
      int inner = 0;
      for (int i = 0; i < n; ++i) inner += norm_of(sample_ball(rng, d, norm, 1.0), norm) <= 0.5 ? 1 : 0;
      const double expected = std::pow(0.5, static_cast<double>(d));
      const double sd = std::sqrt(expected * (1 - expected) / n);
      EXPECT_NEAR(static_cast<double>(inner) / n, expected, 5 * sd) << to_string(norm) << " d=" << d;
    }
  }
}

TEST(Ball, ConstraintsAreCenteredSeededAndLabeled) {
  ConstrainedAdaptConfig cfg;
  cfg.ball_lambda = 1.0;
  cfg.ball_p = BallNorm::linf;
  cfg.ball_samples = 50;
  cfg.seed = 9;
  const Vector x{0, 0};
  const auto a = build_ball_constraints(x, 1, cfg, 4);
  ASSERT_EQ(a.size(), 51u);
  EXPECT_EQ(a[0].x, x);
  for (const auto& c : a) {
    EXPECT_LE(norm_of(c.x, BallNorm::linf), 1.0);
    EXPECT_EQ(c.y, 1.0);
    EXPECT_EQ(c.kind, ConstraintKind::ball_sample);
    EXPECT_EQ(c.origin, 4);
  }
  const auto b = build_ball_constraints(x, 1, cfg, 4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].x, b[i].x);
  EXPECT_EQ(build_ball_constraints(x, 0, cfg, 4, 0).size(), 1u);
  EXPECT_NE(build_ball_constraints(x, 1, cfg, 5)[1].x, a[1].x);
  cfg.ball_lambda = 0.0;
  EXPECT_THROW(build_ball_constraints(x, 1, cfg), InvalidArgument);
}

TEST(Robustness, ShiftsBecomeConstraints) {
  const Vector x{1, 2};
  const auto zero = build_robustness_constraints(x, 0, {{0, 0}});
  ASSERT_EQ(zero.size(), 1u);
  EXPECT_EQ(zero[0].x, x);
  EXPECT_EQ(zero[0].y, 0.0);
  const auto three = build_robustness_constraints(x, 0, feature_steps(2, 0, 0.5, 3), 7);
  ASSERT_EQ(three.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(three[k].x, (Vector{1 + 0.5 * static_cast<double>(k + 1), 2}));
    EXPECT_EQ(three[k].kind, ConstraintKind::robustness_shift);
    EXPECT_EQ(three[k].origin, 7);
  }
  EXPECT_THROW(build_robustness_constraints(x, 0, {{1, 2, 3}}), InvalidArgument);
  EXPECT_THROW(feature_steps(2, 2, 0.5, 3), InvalidArgument);
}

TEST(PersistentCf, FreezesTheClosedFormCounterfactual) {
  const Model h = make_linear_classifier({1, 0});
  const auto c = build_persistent_cf_constraint(Vector{2, 3}, h, 12);
  EXPECT_LT(c.x[0], 0.0);
  EXPECT_NEAR(c.x[0], 0.0, 1e-3);
  EXPECT_EQ(c.x[1], 3.0);
  EXPECT_EQ(c.y, 0.0);
  EXPECT_EQ(c.kind, ConstraintKind::persistent_cf);
  EXPECT_EQ(c.origin, 12);
  EXPECT_EQ(predict(h, c.x), c.y);
}

TEST(PersistentPp, FreezesThePertinentPositive) {
  const Model h = make_linear_classifier({1, 0});
  const auto c = build_persistent_pp_constraint(Vector{3, 9}, h, Vector{0, 0});
  EXPECT_EQ(c.x, (Vector{3, 0}));
  EXPECT_EQ(c.y, 1.0);
  EXPECT_EQ(c.kind, ConstraintKind::persistent_pp);
  // Nothing can be removed: both features are needed.
  const Model both = make_linear_classifier({1, 1}, -3.0);
  const auto d = build_persistent_pp_constraint(Vector{2, 2}, both, Vector{0, 0});
  EXPECT_EQ(d.x, (Vector{2, 2}));
}

TEST(ConstrainedAdapt, EmptyConstraintsReduceToPlainAdaptation) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const auto credit = generate_credit(CreditSpec{});
  struct Case {
    Family family;
    const Dataset* first;
    const Dataset* second;
  };
  for (const Case& c : {Case{Family::logistic_regression, &blobs.batch1, &blobs.batch2},
                        Case{Family::linear_classifier, &blobs.batch1, &blobs.batch2},
                        Case{Family::gaussian_nb, &blobs.batch1, &blobs.batch2},
                        Case{Family::decision_tree, &credit.batch1, &credit.batch2}}) {
    const Model h = fit(c.family, *c.first);
    ConstrainedAdaptConfig cfg;
    cfg.C = 2.0;
    AdaptationConfig base = cfg.base;
    base.C = cfg.C;
    const auto plain = adapt(h, *c.second, base);
    const auto constrained = adapt_with_constraints(h, *c.second, {}, cfg);
    EXPECT_TRUE(params_equal(plain.model, constrained.adaptation.model)) << to_string(c.family);
    EXPECT_NEAR(plain.objective_after, constrained.adaptation.objective_after, 1e-12);
    EXPECT_EQ(constrained.report.fraction_satisfied, 1.0);
  }
}

TEST(ConstrainedAdapt, ZeroConstraintWeightIgnoresConstraints) {
  const Instance in = logistic_instance();
  ConstrainedAdaptConfig cfg;
  AdaptationConfig base = cfg.base;
  base.C = cfg.C;
  cfg.C_prime = 0.0;
  const auto r = adapt_with_constraints(in.h, in.batch2, in.constraints, cfg);
  EXPECT_TRUE(params_equal(r.adaptation.model, adapt(in.h, in.batch2, base).model));
}

TEST(ConstrainedAdapt, SatisfactionGrowsWithConstraintWeight) {
  const Instance in = logistic_instance();
  ConstrainedAdaptConfig cfg;
  cfg.base.max_iters = 20000;
  const std::size_t unconstrained = static_cast<std::size_t>(
      check_constraints(adapt(in.h, in.batch2).model, in.constraints).fraction_satisfied * in.constraints.size() + 0.5);
  std::size_t prev = 0;
  for (double scale : {0.1, 1.0, 10.0, 100.0}) {
    cfg.C_prime = scale * cfg.C;
    const auto r = adapt_with_constraints(in.h, in.batch2, in.constraints, cfg);
    std::size_t sat = 0;
    for (const auto& o : r.report.outcomes) sat += o.satisfied ? 1 : 0;
    EXPECT_GE(sat, prev) << scale;
    prev = sat;
  }
  // Measured: 0, 2, 7, 10 of 10 satisfied.
  EXPECT_GT(prev, unconstrained);
}

TEST(ConstrainedAdapt, DominantWeightSatisfiesEveryConstraint) {
  const Instance in = logistic_instance();
  ConstrainedAdaptConfig cfg;
  cfg.C_prime = 1e6 * cfg.C;
  cfg.base.max_iters = 20000;
  const auto r = adapt_with_constraints(in.h, in.batch2, in.constraints, cfg);
  EXPECT_EQ(r.report.fraction_satisfied, 1.0);
  ASSERT_EQ(r.report.outcomes.size(), in.constraints.size());
  for (std::size_t i = 0; i < in.constraints.size(); ++i) {
    EXPECT_EQ(r.report.outcomes[i].origin, in.constraints[i].origin);
    EXPECT_EQ(r.report.outcomes[i].kind, in.constraints[i].kind);
  }
}

TEST(ConstrainedAdapt, GaussianNbUsesRelativeWeight) {
  const auto blobs = generate_gaussian_blobs(BlobSpec{});
  const Model h = fit(Family::gaussian_nb, blobs.batch1);
  const Vector x{0.0, -2.5};
  std::vector<PersistenceConstraint> cs;
  for (int i = 0; i < 5; ++i) cs.push_back({x, 1.0, ConstraintKind::ball_sample, 0});
  ConstrainedAdaptConfig cfg;
  cfg.C = 1.0;
  cfg.C_prime = 100.0;
  const auto r = adapt_with_constraints(h, blobs.batch2, cs, cfg);
  EXPECT_EQ(predict(r.adaptation.model, x), 1.0);
  EXPECT_EQ(predict(adapt(h, blobs.batch2).model, x), 0.0);
}

TEST(ConstrainedAdapt, Validation) {
  const Instance in = logistic_instance();
  ConstrainedAdaptConfig cfg;
  cfg.C = 0.0;
  EXPECT_THROW(adapt_with_constraints(in.h, in.batch2, {}, cfg), InvalidArgument);
  cfg = {};
  cfg.C_prime = -1.0;
  EXPECT_THROW(adapt_with_constraints(in.h, in.batch2, {}, cfg), InvalidArgument);
  cfg = {};
  EXPECT_THROW(adapt_with_constraints(in.h, in.batch2, {{{1, 2, 3}, 0, ConstraintKind::ball_sample, 0}}, cfg),
               InvalidArgument);
}
