#pragma once

#include <cmath>
#include <vector>

#include "cfdiff/dataset.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/optimize.hpp"
#include "cfdiff/train.hpp"

namespace cfdiff {

/// Weights of the adaptation objective
///   proximity_weight * ||theta' - theta||^2 + C * sum_i loss(x_i, y_i).
struct AdaptationConfig {
  double C = 1.0;
  double proximity_weight = 0.1;
  std::size_t max_iters = 5000;
  double step_size = 1.0;
  double tolerance = 1e-8;

  void validate() const {
    if (!(C >= 0.0) || !std::isfinite(C)) throw InvalidArgument("AdaptationConfig: C must be non-negative");
    if (!(proximity_weight >= 0.0)) throw InvalidArgument("AdaptationConfig: proximity_weight must be non-negative");
    if (max_iters == 0) throw InvalidArgument("AdaptationConfig: max_iters must be positive");
    if (!(step_size > 0.0) || !(tolerance > 0.0))
      throw InvalidArgument("AdaptationConfig: step_size and tolerance must be positive");
  }
};

struct AdaptResult {
  Model model;
  /// Objective of the original parameters and of the optimizer's final
  /// iterate (before the unit-norm projection of linear_classifier).
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::size_t iterations = 0;
  /// False when max_iters was hit first; a warning, not an error.
  bool converged = true;
  std::vector<double> trace;
};

/// Rows entering the adaptation loss, each with its own loss weight.
struct WeightedRows {
  std::vector<Vector> xs;
  std::vector<Label> ys;
  Vector weights;

  void append(const Dataset& data, double weight) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      xs.push_back(data.features[i]);
      ys.push_back(data.labels[i]);
      weights.push_back(weight);
    }
  }
};

namespace detail {

inline void check_compatible(const Model& m, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("cannot adapt to an empty dataset");
  data.validate();
  if (data.n_features() != m.n_features) throw InvalidArgument("family mismatch: feature count differs from the model");
  if (m.is_classifier() != (data.task == Task::classification))
    throw InvalidArgument("family mismatch: " + to_string(m.family) + " cannot adapt to " + to_string(data.task) +
                          " data");
  if (m.is_classifier())
    for (Label y : data.labels)
      if (y >= static_cast<double>(m.n_classes)) throw InvalidArgument("label outside the model's classes");
}

inline AdaptResult adapt_linear(const Model& m, const WeightedRows& rows, double proximity_weight,
                                const AdaptationConfig& cfg, bool record_trace) {
  const Vector theta0 = flatten(m.linear());
  auto objective = [&](const Vector& theta, Vector& grad) {
    double f = linear_data_loss(m.family, theta, rows.xs, rows.ys, rows.weights, grad);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double diff = theta[j] - theta0[j];
      f += proximity_weight * diff * diff;
      grad[j] += 2.0 * proximity_weight * diff;
    }
    return f;
  };
  GradientDescentOptions gd;
  gd.max_iters = cfg.max_iters;
  gd.step_size = cfg.step_size;
  gd.tolerance = cfg.tolerance;
  gd.record_trace = record_trace;
  Vector scratch;
  AdaptResult out;
  out.objective_before = objective(theta0, scratch);
  auto res = gradient_descent(objective, theta0, gd);
  out.objective_after = res.objective;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.trace = std::move(res.trace);
  LinearParams p = unflatten(res.theta);
  if (m.family == Family::linear_classifier)
    out.model = make_linear_classifier(std::move(p.w), p.b);
  else
    out.model = Model{m.family, m.n_features, m.n_classes, std::move(p)};
  return out;
}

/// Convex blend of normalized sufficient statistics; `alpha` weights the new data.
inline Model adapt_gnb(const Model& m, const WeightedRows& rows, double alpha) {
  if (alpha == 0.0) return m;
  const auto& old = m.gnb();
  const auto fresh = class_moments(rows.xs, rows.ys, rows.weights, m.n_classes, m.n_features);
  auto blended = moments_of(old);
  for (std::size_t c = 0; c < blended.size(); ++c) {
    blended[c].n = (1.0 - alpha) * blended[c].n + alpha * fresh[c].n;
    for (std::size_t j = 0; j < m.n_features; ++j) {
      blended[c].s[j] = (1.0 - alpha) * blended[c].s[j] + alpha * fresh[c].s[j];
      blended[c].q[j] = (1.0 - alpha) * blended[c].q[j] + alpha * fresh[c].q[j];
    }
  }
  const double smoothing = std::max(old.var_smoothing, gnb_smoothing(rows.xs, rows.weights, m.n_features));
  return make_gaussian_nb(gnb_from_moments(blended, smoothing));
}

/// Refit on the stored training rows plus the new rows.
inline Model adapt_tree(const Model& m, const WeightedRows& rows) {
  const auto& old = m.tree();
  std::vector<Vector> xs = old.train_x;
  std::vector<Label> ys = old.train_y;
  Vector w = old.train_w;
  xs.insert(xs.end(), rows.xs.begin(), rows.xs.end());
  ys.insert(ys.end(), rows.ys.begin(), rows.ys.end());
  w.insert(w.end(), rows.weights.begin(), rows.weights.end());
  return fit_tree_rows(std::move(xs), std::move(ys), std::move(w), m.n_classes, m.n_features, old.config);
}

}  // namespace detail

/// Adapts `m` to weighted rows. For linear families the row weights multiply
/// the per-sample loss directly. gaussian_nb blends statistics with weight
/// C / (C + proximity_weight) on the new rows; decision trees are refit on
/// old and new rows. Rows for the non-gradient families should carry weights
/// relative to a data point (1.0).
inline AdaptResult adapt_rows(const Model& m, const WeightedRows& rows, const AdaptationConfig& cfg,
                              bool record_trace = false) {
  cfg.validate();
  if (is_linear(m.family)) return detail::adapt_linear(m, rows, cfg.proximity_weight, cfg, record_trace);
  AdaptResult out;
  if (m.family == Family::gaussian_nb) {
    const double denom = cfg.C + cfg.proximity_weight;
    const double alpha = denom > 0.0 ? cfg.C / denom : 0.0;
    out.model = detail::adapt_gnb(m, rows, alpha);
  } else {
    WeightedRows scaled = rows;
    if (cfg.C == 0.0) scaled.weights.assign(scaled.weights.size(), 0.0);
    out.model = detail::adapt_tree(m, scaled);
  }
  return out;
}

/// Finds h' close to `m` that fits `data`.
inline AdaptResult adapt(const Model& m, const Dataset& data, const AdaptationConfig& cfg = {},
                         bool record_trace = false) {
  detail::check_compatible(m, data);
  WeightedRows rows;
  rows.append(data, is_linear(m.family) ? cfg.C : 1.0);
  return adapt_rows(m, rows, cfg, record_trace);
}

}  // namespace cfdiff
