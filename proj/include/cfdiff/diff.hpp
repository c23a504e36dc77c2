#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/model.hpp"

namespace cfdiff {

/// Counterfactual towards the other class of a binary classifier.
struct FlipTarget {};

/// How each sample's counterfactual target is chosen.
using TargetSpec = std::variant<FlipTarget, ClassTarget, IntervalTarget>;

inline Target resolve_target(const TargetSpec& spec, Label label) {
  if (std::holds_alternative<FlipTarget>(spec)) return ClassTarget{label == 1.0 ? std::size_t{0} : std::size_t{1}};
  if (const auto* c = std::get_if<ClassTarget>(&spec)) return *c;
  return std::get<IntervalTarget>(spec);
}

/// delta = x_cf - x from the family-appropriate solver; `valid` flags failures.
inline CounterfactualResult explanation_delta(const Model& m, std::span<const double> x, const Target& target,
                                              const CfSolverConfig& cfg = {}) {
  return counterfactual(m, x, target, cfg);
}

/// Component-wise |a_i - b_i|.
inline Vector psi_compare(std::span<const double> delta_old, std::span<const double> delta_new) {
  require_same_size(delta_old, delta_new, "psi_compare");
  Vector out(delta_old.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(delta_old[i] - delta_new[i]);
  return out;
}

inline double psi_euclid(std::span<const double> delta_old, std::span<const double> delta_new, int p = 2) {
  require_same_size(delta_old, delta_new, "psi_euclid");
  return distance(delta_old, delta_new, p);
}

inline double psi_cosine(std::span<const double> delta_old, std::span<const double> delta_new) {
  require_same_size(delta_old, delta_new, "psi_cosine");
  const double na = norm2(delta_old);
  const double nb = norm2(delta_new);
  if (na <= 1e-12 || nb <= 1e-12) throw InvalidArgument("undefined angle: zero-norm explanation");
  return std::clamp(dot(delta_old, delta_new) / (na * nb), -1.0, 1.0);
}

struct ExplanationDiff {
  std::size_t index = 0;
  Vector x;
  Vector delta_old;
  Vector delta_new;
  Vector psi;
  double psi_euclid = 0.0;
  /// Empty when either delta has (near) zero norm.
  std::optional<double> psi_cosine;
  bool both_valid = true;
};

struct SkippedSample {
  std::size_t index = 0;
  std::string reason;
};

struct DiffReport {
  std::vector<std::string> feature_names;
  std::vector<ExplanationDiff> per_sample;
  /// Per feature: mean over samples of |delta_new| - |delta_old|.
  Vector mean_abs_delta_change;
  /// Per feature: mean psi.
  Vector mean_psi;
  std::vector<SkippedSample> skipped;
};

struct DiffOptions {
  CfSolverConfig cf;
  /// Regression samples count as correctly predicted within this tolerance.
  double regression_tolerance = std::numeric_limits<double>::infinity();
  /// Restrict to these row indices (in the given order); empty means all rows.
  std::vector<std::size_t> subset;
};

inline bool correctly_predicted(const Model& m, std::span<const double> x, Label y, double regression_tolerance) {
  if (m.is_classifier()) return predict(m, x) == y;
  return std::abs(predict(m, x) - y) <= regression_tolerance;
}

inline ExplanationDiff compare_explanations(std::size_t index, std::span<const double> x,
                                            const CounterfactualResult& old_cf, const CounterfactualResult& new_cf) {
  ExplanationDiff d;
  d.index = index;
  d.x.assign(x.begin(), x.end());
  d.delta_old = old_cf.delta;
  d.delta_new = new_cf.delta;
  d.psi = psi_compare(d.delta_old, d.delta_new);
  d.psi_euclid = psi_euclid(d.delta_old, d.delta_new);
  if (norm2(d.delta_old) > 1e-12 && norm2(d.delta_new) > 1e-12) d.psi_cosine = psi_cosine(d.delta_old, d.delta_new);
  d.both_valid = old_cf.valid && new_cf.valid;
  return d;
}

inline void aggregate(DiffReport& report, std::size_t n_features) {
  report.mean_abs_delta_change.assign(n_features, 0.0);
  report.mean_psi.assign(n_features, 0.0);
  if (report.per_sample.empty()) return;
  for (const auto& d : report.per_sample)
    for (std::size_t j = 0; j < n_features; ++j) {
      report.mean_abs_delta_change[j] += std::abs(d.delta_new[j]) - std::abs(d.delta_old[j]);
      report.mean_psi[j] += d.psi[j];
    }
  const double n = static_cast<double>(report.per_sample.size());
  for (std::size_t j = 0; j < n_features; ++j) {
    report.mean_abs_delta_change[j] /= n;
    report.mean_psi[j] /= n;
  }
}

/// Compares the explanations of `h` and `h_new` on the samples both models
/// predict correctly; every other sample is listed in `skipped`.
inline DiffReport explain_model_differences(const Model& h, const Model& h_new, const Dataset& data,
                                            const TargetSpec& target_spec, const DiffOptions& opts = {}) {
  if (h.n_features != h_new.n_features || h.is_classifier() != h_new.is_classifier() ||
      h.n_classes != h_new.n_classes)
    throw InvalidArgument("incompatible models: feature count or task differs");
  if (data.n_features() != h.n_features) throw InvalidArgument("dataset does not match the models' feature count");
  DiffReport report;
  report.feature_names = data.feature_names;

  std::vector<std::size_t> rows = opts.subset;
  if (rows.empty())
    for (std::size_t i = 0; i < data.size(); ++i) rows.push_back(i);

  for (std::size_t i : rows) {
    if (i >= data.size()) throw InvalidArgument("subset index out of range");
    const auto& x = data.features[i];
    const Label y = data.labels[i];
    if (!correctly_predicted(h, x, y, opts.regression_tolerance)) {
      report.skipped.push_back({i, "misclassified by h"});
      continue;
    }
    if (!correctly_predicted(h_new, x, y, opts.regression_tolerance)) {
      report.skipped.push_back({i, "misclassified by h'"});
      continue;
    }
    const Target target = resolve_target(target_spec, y);
    CounterfactualResult cf_old, cf_new;
    try {
      cf_old = explanation_delta(h, x, target, opts.cf);
      cf_new = explanation_delta(h_new, x, target, opts.cf);
    } catch (const Error& e) {
      report.skipped.push_back({i, std::string("solver error: ") + e.what()});
      continue;
    }
    if (!cf_old.valid) {
      report.skipped.push_back({i, "invalid counterfactual under h"});
      continue;
    }
    if (!cf_new.valid) {
      report.skipped.push_back({i, "invalid counterfactual under h'"});
      continue;
    }
    report.per_sample.push_back(compare_explanations(i, x, cf_old, cf_new));
  }
  aggregate(report, h.n_features);
  return report;
}

}  // namespace cfdiff
