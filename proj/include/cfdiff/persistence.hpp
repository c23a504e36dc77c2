#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cfdiff/adapt.hpp"
#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/random.hpp"

namespace cfdiff {

enum class ConstraintKind { ball_sample, robustness_shift, persistent_cf, persistent_pp };

inline std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::ball_sample: return "ball_sample";
    case ConstraintKind::robustness_shift: return "robustness_shift";
    case ConstraintKind::persistent_cf: return "persistent_cf";
    case ConstraintKind::persistent_pp: return "persistent_pp";
  }
  return "unknown";
}

inline ConstraintKind constraint_kind_from_string(std::string_view s) {
  for (auto k : {ConstraintKind::ball_sample, ConstraintKind::robustness_shift, ConstraintKind::persistent_cf,
                 ConstraintKind::persistent_pp})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown constraint kind '" + std::string(s) + "'");
}

/// A labeled point (x, y) the adapted model must predict as y.
struct PersistenceConstraint {
  Vector x;
  Label y = 0.0;
  ConstraintKind kind = ConstraintKind::robustness_shift;
  /// Row index of the sample the constraint was derived from; -1 if unknown.
  std::int64_t origin = -1;
};

enum class BallNorm { l1, l2, linf };

inline std::string to_string(BallNorm n) {
  switch (n) {
    case BallNorm::l1: return "1";
    case BallNorm::l2: return "2";
    case BallNorm::linf: return "inf";
  }
  return "?";
}

inline BallNorm ball_norm_from_string(std::string_view s) {
  if (s == "1") return BallNorm::l1;
  if (s == "2") return BallNorm::l2;
  if (s == "inf") return BallNorm::linf;
  throw InvalidArgument("ball norm must be 1, 2 or inf");
}

struct ConstrainedAdaptConfig {
  double C = 1.0;
  /// Loss weight of the constraint points.
  double C_prime = 10.0;
  AdaptationConfig base;
  double ball_lambda = 0.1;
  BallNorm ball_p = BallNorm::l2;
  std::size_t ball_samples = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(C > 0.0)) throw InvalidArgument("ConstrainedAdaptConfig: C must be positive");
    if (!(C_prime >= 0.0)) throw InvalidArgument("ConstrainedAdaptConfig: C' must be non-negative");
    if (!(ball_lambda > 0.0)) throw InvalidArgument("ConstrainedAdaptConfig: lambda must be positive");
  }
};

/// Uniform point of the radius-`radius` ball of the given norm, centered at 0.
inline Vector sample_ball(Rng& rng, std::size_t d, BallNorm norm, double radius) {
  Vector v(d);
  switch (norm) {
    case BallNorm::linf:
      for (auto& c : v) c = rng.uniform(-radius, radius);
      break;
    case BallNorm::l2: {
      double n = 0.0;
      while (n == 0.0) {
        for (auto& c : v) c = rng.normal();
        n = norm2(v);
      }
      const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      for (auto& c : v) c *= r / n;
      break;
    }
    case BallNorm::l1: {
      // d + 1 exponential spacings give a uniform point of the simplex; the
      // first d coordinates with random signs are uniform in the l1 ball.
      double total = 0.0;
      for (auto& c : v) {
        c = rng.exponential();
        total += c;
      }
      total += rng.exponential();
      for (auto& c : v) {
        c *= radius / total;
        if (rng.next() & 1ULL) c = -c;
      }
      break;
    }
  }
  return v;
}

/// The center plus `ball_samples` seeded draws from the lambda-ball around it,
/// all labeled y. The stream depends on (seed, origin) only.
inline std::vector<PersistenceConstraint> build_ball_constraints(std::span<const double> x, Label y,
                                                                 const ConstrainedAdaptConfig& cfg,
                                                                 std::int64_t origin = -1,
                                                                 std::size_t ball_samples_override = SIZE_MAX) {
  if (!(cfg.ball_lambda > 0.0)) throw InvalidArgument("ball radius lambda must be positive");
  const std::size_t n = ball_samples_override == SIZE_MAX ? cfg.ball_samples : ball_samples_override;
  std::vector<PersistenceConstraint> out;
  out.push_back({Vector(x.begin(), x.end()), y, ConstraintKind::ball_sample, origin});
  Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(origin + 1)));
  for (std::size_t i = 0; i < n; ++i) {
    Vector p = sample_ball(rng, x.size(), cfg.ball_p, cfg.ball_lambda);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += x[j];
    out.push_back({std::move(p), y, ConstraintKind::ball_sample, origin});
  }
  return out;
}

/// One constraint (x + z_j, y) per shift z_j.
inline std::vector<PersistenceConstraint> build_robustness_constraints(std::span<const double> x, Label y,
                                                                       const std::vector<Vector>& shifts,
                                                                       std::int64_t origin = -1) {
  std::vector<PersistenceConstraint> out;
  for (const auto& z : shifts) {
    if (z.size() != x.size()) throw InvalidArgument("shift dimension does not match the sample");
    out.push_back({add(x, z), y, ConstraintKind::robustness_shift, origin});
  }
  return out;
}

/// Shifts step * k along one feature, k = 1..n_steps.
inline std::vector<Vector> feature_steps(std::size_t n_features, std::size_t feature, double step, std::size_t n_steps) {
  if (feature >= n_features) throw InvalidArgument("feature index out of range");
  std::vector<Vector> shifts;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    Vector z(n_features, 0.0);
    z[feature] = step * static_cast<double>(k);
    shifts.push_back(std::move(z));
  }
  return shifts;
}

/// Freezes the counterfactual of x under h: (x_cf, y') with y' the other class.
inline PersistenceConstraint build_persistent_cf_constraint(std::span<const double> x, const Model& h,
                                                            std::int64_t origin = -1, const CfSolverConfig& cfg = {}) {
  if (!h.is_classifier()) throw InvalidArgument("persistent counterfactuals need a classifier");
  const Target target = ClassTarget{detail::binary_flip(h, x)};
  const auto cf = counterfactual(h, x, target, cfg);
  if (!cf.valid) throw Error("counterfactual solver failed to find a valid counterfactual");
  return {cf.x_cf, static_cast<double>(std::get<ClassTarget>(target).cls), ConstraintKind::persistent_cf, origin};
}

/// Freezes the pertinent positive of x under h: (x_pp, h(x)).
inline PersistenceConstraint build_persistent_pp_constraint(std::span<const double> x, const Model& h,
                                                            std::span<const double> defaults, double epsilon = 1e-9,
                                                            std::int64_t origin = -1) {
  const auto pp = pertinent_positive(h, x, defaults, epsilon);
  if (!pp.valid) throw Error("pertinent positive computation failed");
  return {pp.x_pp, predict(h, x), ConstraintKind::persistent_pp, origin};
}

struct ConstraintOutcome {
  std::int64_t origin = -1;
  ConstraintKind kind = ConstraintKind::robustness_shift;
  bool satisfied = false;
};

struct SatisfactionReport {
  std::vector<ConstraintOutcome> outcomes;
  double fraction_satisfied = 1.0;
  std::vector<std::string> warnings;
};

inline SatisfactionReport check_constraints(const Model& m, const std::vector<PersistenceConstraint>& constraints) {
  SatisfactionReport r;
  std::size_t ok = 0;
  for (const auto& c : constraints) {
    const bool sat = predict(m, c.x) == c.y;
    ok += sat ? 1 : 0;
    r.outcomes.push_back({c.origin, c.kind, sat});
  }
  r.fraction_satisfied = constraints.empty() ? 1.0 : static_cast<double>(ok) / static_cast<double>(constraints.size());
  return r;
}

struct ConstrainedAdaptResult {
  AdaptResult adaptation;
  SatisfactionReport report;
};

/// Minimizes Omega(h, h') + C * sum_D loss + C' * sum_constraints loss. Linear
/// families use the weights in the loss; gaussian_nb and decision_tree treat
/// each constraint as an extra sample with weight C'/C relative to a data point.
inline ConstrainedAdaptResult adapt_with_constraints(const Model& h, const Dataset& data,
                                                     const std::vector<PersistenceConstraint>& constraints,
                                                     const ConstrainedAdaptConfig& cfg) {
  cfg.validate();
  detail::check_compatible(h, data);
  for (const auto& c : constraints)
    if (c.x.size() != h.n_features) throw InvalidArgument("constraint dimension does not match the model");

  AdaptationConfig base = cfg.base;
  base.C = cfg.C;
  const bool linear = is_linear(h.family);
  WeightedRows rows;
  rows.append(data, linear ? cfg.C : 1.0);
  const double cw = linear ? cfg.C_prime : cfg.C_prime / cfg.C;
  for (const auto& c : constraints) {
    rows.xs.push_back(c.x);
    rows.ys.push_back(c.y);
    rows.weights.push_back(cw);
  }
  ConstrainedAdaptResult out{adapt_rows(h, rows, base), {}};
  out.report = check_constraints(out.adaptation.model, constraints);
  if (!out.adaptation.converged) out.report.warnings.push_back("optimizer reached max_iters before converging");
  if (out.report.fraction_satisfied < 1.0)
    out.report.warnings.push_back("not all persistence constraints are satisfied; consider a larger C'");
  return out;
}

}  // namespace cfdiff
