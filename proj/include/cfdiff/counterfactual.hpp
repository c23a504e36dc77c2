#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "cfdiff/error.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/optimize.hpp"

namespace cfdiff {

/// Geometric / decision-value overshoot past a decision boundary so that the
/// label flips strictly.
inline constexpr double kDefaultMargin = 1e-4;

struct ClassTarget {
  std::size_t cls = 0;
};

/// Regression target: |f(x) - center| <= deviation.
struct IntervalTarget {
  double center = 0.0;
  double deviation = 0.0;
};

using Target = std::variant<ClassTarget, IntervalTarget>;

enum class Solver { closed_form, gradient_penalty, leaf_enum };

inline std::string to_string(Solver s) {
  switch (s) {
    case Solver::closed_form: return "closed_form";
    case Solver::gradient_penalty: return "gradient_penalty";
    case Solver::leaf_enum: return "leaf_enum";
  }
  return "unknown";
}

struct CounterfactualResult {
  Vector x_orig;
  Vector x_cf;
  /// Always x_cf - x_orig.
  Vector delta;
  Target target;
  /// Set by an explicit re-check of the model at x_cf.
  bool valid = false;
  Solver solver = Solver::closed_form;
  std::size_t iterations = 0;
};

struct PertinentPositiveResult {
  Vector x_pp;
  /// Features that keep their original value (the "turned on" set), ascending.
  std::vector<std::size_t> on_features;
  Vector defaults;
  double epsilon = 1e-9;
  bool valid = false;
};

struct CfSolverConfig {
  std::vector<double> C_schedule{1.0, 10.0, 100.0, 1000.0};
  std::size_t max_iters = 500;
  double step_size = 1.0;
  double margin = kDefaultMargin;
  /// Distance penalty: 2 = squared Euclidean, 1 = smoothed l1.
  int distance_order = 2;

  void validate() const {
    if (C_schedule.empty()) throw InvalidArgument("CfSolverConfig: empty C schedule");
    for (std::size_t i = 0; i < C_schedule.size(); ++i) {
      if (!(C_schedule[i] > 0.0)) throw InvalidArgument("CfSolverConfig: C values must be positive");
      if (i > 0 && !(C_schedule[i] > C_schedule[i - 1]))
        throw InvalidArgument("CfSolverConfig: C schedule must be strictly increasing");
    }
    if (!(margin > 0.0)) throw InvalidArgument("CfSolverConfig: margin must be positive");
    if (distance_order != 1 && distance_order != 2) throw InvalidArgument("CfSolverConfig: distance_order must be 1 or 2");
    if (max_iters == 0) throw InvalidArgument("CfSolverConfig: max_iters must be positive");
  }
};

inline bool meets_target(const Model& m, std::span<const double> x, const Target& target) {
  if (const auto* c = std::get_if<ClassTarget>(&target)) return predict(m, x) == static_cast<double>(c->cls);
  const auto& iv = std::get<IntervalTarget>(target);
  const double tol = 1e-9 * std::max(1.0, std::abs(iv.center));
  return std::abs(predict(m, x) - iv.center) <= iv.deviation + tol;
}

namespace detail {

inline CounterfactualResult make_result(std::span<const double> x, Vector x_cf, Target target, Solver solver,
                                        std::size_t iterations, const Model& m) {
  CounterfactualResult r;
  r.x_orig.assign(x.begin(), x.end());
  r.delta = sub(x_cf, x);
  r.x_cf = std::move(x_cf);
  r.target = target;
  r.solver = solver;
  r.iterations = iterations;
  r.valid = meets_target(m, r.x_cf, target);
  return r;
}

inline std::size_t binary_flip(const Model& m, std::span<const double> x) {
  if (m.n_classes != 2) throw InvalidArgument("an implicit opposite class needs a binary classifier");
  return predict(m, x) == 1.0 ? 0 : 1;
}

}  // namespace detail

/// Orthogonal projection through the hyperplane w.x + b = 0, overshooting by
/// `margin` relative to |f(x)|: x_cf = x - f(x) (1 + margin) w.
inline CounterfactualResult closest_cf_linear(const Model& m, std::span<const double> x,
                                              double margin = kDefaultMargin) {
  if (m.family != Family::linear_classifier) throw InvalidArgument("closest_cf_linear needs a linear_classifier");
  const double f = decision_function(m, x);
  if (f == 0.0) throw InvalidArgument("ill-defined counterfactual target: sample lies on the decision boundary");
  Vector x_cf(x.begin(), x.end());
  axpy(-f * (1.0 + margin), m.linear().w, x_cf);
  return detail::make_result(x, std::move(x_cf), ClassTarget{detail::binary_flip(m, x)}, Solver::closed_form, 0, m);
}

/// Penalty-continuation solver: for each C in the schedule, minimizes
///   dist(z, x) + C * max(0, goal + shift - s(z))^2
/// by gradient descent, where s is the target score (positive where the
/// model predicts the target). After every inner solve the shift is raised by
/// the remaining shortfall, which drives s(z) to `goal` = 2 * margin without
/// needing C to grow without bound. Returns the first z with s(z) >= margin.
inline CounterfactualResult cf_gradient_penalty(const Model& m, std::span<const double> x, std::size_t target_class,
                                                const CfSolverConfig& cfg = {}) {
  cfg.validate();
  check_dim(m, x);
  if (!is_differentiable(m.family)) throw Unsupported("non-differentiable family: " + to_string(m.family));
  if (!m.is_classifier()) throw InvalidArgument("cf_gradient_penalty needs a classifier");
  if (target_class >= m.n_classes) throw InvalidArgument("target class out of range");
  if (predict(m, x) == static_cast<double>(target_class))
    throw InvalidArgument("sample is already predicted as the target class");

  const Vector x0(x.begin(), x.end());
  const double goal = 2.0 * cfg.margin;
  constexpr double kL1Smoothing = 1e-4;
  Vector z = x0;
  std::size_t total_iters = 0;

  auto is_valid = [&](const Vector& p) {
    return target_score(m, p, target_class) >= cfg.margin && predict(m, p) == static_cast<double>(target_class);
  };

  for (double C : cfg.C_schedule) {
    double shift = 0.0;
    std::size_t budget = cfg.max_iters;
    for (std::size_t round = 0; round < 200 && budget > 0; ++round) {
      const double level = goal + shift;
      auto objective = [&](const Vector& p, Vector& grad) {
        grad.assign(p.size(), 0.0);
        double f = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          const double u = p[j] - x0[j];
          if (cfg.distance_order == 2) {
            f += u * u;
            grad[j] = 2.0 * u;
          } else {
            const double r = std::sqrt(u * u + kL1Smoothing * kL1Smoothing);
            f += r - kL1Smoothing;
            grad[j] = u / r;
          }
        }
        const double gap = level - target_score(m, p, target_class);
        if (gap > 0.0) {
          f += C * gap * gap;
          const Vector gs = target_score_gradient(m, p, target_class);
          axpy(-2.0 * C * gap, gs, grad);
        }
        return f;
      };
      GradientDescentOptions gd;
      gd.max_iters = budget;
      gd.step_size = cfg.step_size;
      gd.tolerance = 1e-14;
      auto res = gradient_descent(objective, z, gd);
      z = std::move(res.theta);
      budget -= std::min(budget, std::max<std::size_t>(res.iterations, 1));
      total_iters += res.iterations;
      if (is_valid(z)) return detail::make_result(x, z, ClassTarget{target_class}, Solver::gradient_penalty, total_iters, m);
      const double s = target_score(m, z, target_class);
      if (!std::isfinite(s)) break;
      shift += goal - s;
    }
  }
  return detail::make_result(x, z, ClassTarget{target_class}, Solver::gradient_penalty, total_iters, m);
}

/// Axis-aligned region of a tree leaf. Lower bounds are strict (x > lo),
/// upper bounds are closed (x <= hi).
struct LeafBox {
  int leaf = -1;
  int label = 0;
  Vector lo;
  Vector hi;
};

/// Leaves in left-to-right depth-first order with their regions.
inline std::vector<LeafBox> leaf_boxes(const Model& m) {
  const auto& p = m.tree();
  std::vector<LeafBox> out;
  const double inf = std::numeric_limits<double>::infinity();
  struct Frame {
    int node;
    Vector lo, hi;
  };
  std::vector<Frame> stack{{0, Vector(m.n_features, -inf), Vector(m.n_features, inf)}};
  while (!stack.empty()) {
    Frame fr = std::move(stack.back());
    stack.pop_back();
    const auto& n = p.nodes[static_cast<std::size_t>(fr.node)];
    if (n.feature < 0) {
      out.push_back(LeafBox{fr.node, n.label, std::move(fr.lo), std::move(fr.hi)});
      continue;
    }
    const auto f = static_cast<std::size_t>(n.feature);
    Frame left{n.left, fr.lo, fr.hi};
    left.hi[f] = std::min(left.hi[f], n.threshold);
    Frame right{n.right, std::move(fr.lo), std::move(fr.hi)};
    right.lo[f] = std::max(right.lo[f], n.threshold);
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return out;
}

/// Closest point of a leaf box, pushed `margin` inside every active face.
inline Vector project_into_box(std::span<const double> x, const LeafBox& box, double margin) {
  Vector z(x.begin(), x.end());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double lo = box.lo[j];
    const double hi = box.hi[j];
    if (z[j] > lo && z[j] <= hi) continue;
    if (hi - lo <= 2.0 * margin) {
      z[j] = 0.5 * (lo + hi);
    } else if (z[j] <= lo) {
      z[j] = lo + margin;
    } else {
      z[j] = hi - margin;
    }
  }
  return z;
}

/// Exact closest counterfactual of a decision tree: projects x onto every leaf
/// region with the target label and keeps the nearest (first on ties).
inline CounterfactualResult cf_tree(const Model& m, std::span<const double> x, std::size_t target_class, int p = 2,
                                    double margin = kDefaultMargin) {
  if (m.family != Family::decision_tree) throw InvalidArgument("cf_tree needs a decision_tree");
  check_dim(m, x);
  if (p != 1 && p != 2) throw InvalidArgument("cf_tree: distance order must be 1 or 2");
  double best = std::numeric_limits<double>::infinity();
  Vector best_z;
  std::size_t examined = 0;
  for (const auto& box : leaf_boxes(m)) {
    if (box.label != static_cast<int>(target_class)) continue;
    ++examined;
    Vector z = project_into_box(x, box, margin);
    const double d = distance(z, x, p);
    if (d < best) {
      best = d;
      best_z = std::move(z);
    }
  }
  if (examined == 0) throw InvalidArgument("no leaf with target label " + std::to_string(target_class));
  return detail::make_result(x, std::move(best_z), ClassTarget{target_class}, Solver::leaf_enum, examined, m);
}

/// Closest point whose prediction lies in [target - deviation, target + deviation]
/// for a linear regression model: projection onto the nearest slab face.
inline CounterfactualResult cf_regression(const Model& m, std::span<const double> x, double target, double deviation,
                                          double margin = kDefaultMargin) {
  if (m.family != Family::linear_regression) throw InvalidArgument("cf_regression needs a linear_regression model");
  if (!(deviation >= 0.0)) throw InvalidArgument("deviation must be non-negative");
  const auto& beta = m.linear().w;
  const double bb = dot(beta, beta);
  if (bb == 0.0) throw InvalidArgument("zero coefficient vector: prediction cannot be changed");
  const IntervalTarget iv{target, deviation};
  const double f = decision_function(m, x);
  Vector x_cf(x.begin(), x.end());
  if (std::abs(f - target) > deviation) {
    const double inset = std::min(margin, 0.5 * deviation);
    const double face = f > target ? target + deviation - inset : target - deviation + inset;
    axpy((face - f) / bb, beta, x_cf);
  }
  return detail::make_result(x, std::move(x_cf), iv, Solver::closed_form, 0, m);
}

/// Greedy backward elimination: repeatedly resets to its default the feature
/// whose removal keeps the original label with the largest score margin
/// (lowest index on ties), until no single reset preserves the label.
/// For differentiable models the label is kept only with a strictly positive
/// target score.
inline PertinentPositiveResult pertinent_positive(const Model& m, std::span<const double> x,
                                                  std::span<const double> defaults, double epsilon = 1e-9) {
  check_dim(m, x);
  if (defaults.size() != x.size()) throw InvalidArgument("pertinent_positive: dimension mismatch between x and defaults");
  if (!m.is_classifier()) throw Unsupported("pertinent positives need a classifier");
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
  const Label y = predict(m, x);
  const auto cls = static_cast<std::size_t>(y);

  Vector cur(x.begin(), x.end());
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (std::abs(cur[i] - defaults[i]) <= epsilon) cur[i] = defaults[i];

  auto on_set = [&](const Vector& v) {
    std::vector<std::size_t> on;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::abs(v[i] - defaults[i]) > epsilon) on.push_back(i);
    return on;
  };

  const bool scored = is_differentiable(m.family);
  // A point on the decision boundary does not count as keeping the label
  // unless x itself sits there.
  const bool strict = scored && target_score(m, x, cls) > 0.0;
  auto keeps_label = [&](const Vector& v) { return predict(m, v) == y && (!strict || target_score(m, v, cls) > 0.0); };
  if (!keeps_label(cur)) cur.assign(x.begin(), x.end());
  for (;;) {
    const auto on = on_set(cur);
    std::ptrdiff_t best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i : on) {
      Vector trial = cur;
      trial[i] = defaults[i];
      if (!keeps_label(trial)) continue;
      const double score = scored ? target_score(m, trial, cls) : 0.0;
      if (best < 0 || score > best_score) {
        best = static_cast<std::ptrdiff_t>(i);
        best_score = score;
      }
    }
    if (best < 0) break;
    cur[static_cast<std::size_t>(best)] = defaults[static_cast<std::size_t>(best)];
  }

  PertinentPositiveResult r;
  r.on_features = on_set(cur);
  r.x_pp = std::move(cur);
  r.defaults.assign(defaults.begin(), defaults.end());
  r.epsilon = epsilon;
  r.valid = predict(m, r.x_pp) == y;
  return r;
}

/// Family-appropriate counterfactual: closed form for linear classifiers and
/// linear regression, leaf enumeration for trees, penalty solver otherwise.
inline CounterfactualResult counterfactual(const Model& m, std::span<const double> x, const Target& target,
                                           const CfSolverConfig& cfg = {}) {
  if (const auto* iv = std::get_if<IntervalTarget>(&target)) return cf_regression(m, x, iv->center, iv->deviation, cfg.margin);
  const std::size_t cls = std::get<ClassTarget>(target).cls;
  if (!m.is_classifier()) throw InvalidArgument("class target given for a regression model");
  if (predict(m, x) == static_cast<double>(cls)) {
    Vector same(x.begin(), x.end());
    return detail::make_result(x, std::move(same), target, Solver::closed_form, 0, m);
  }
  switch (m.family) {
    case Family::linear_classifier: return closest_cf_linear(m, x, cfg.margin);
    case Family::decision_tree: return cf_tree(m, x, cls, cfg.distance_order, cfg.margin);
    default: return cf_gradient_penalty(m, x, cls, cfg);
  }
}

}  // namespace cfdiff
