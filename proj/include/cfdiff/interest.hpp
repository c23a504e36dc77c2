#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/diff.hpp"
#include "cfdiff/model.hpp"

namespace cfdiff {

enum class InterestMethod { exact_euclid, exact_cosine, gradient_cosine };

inline std::string to_string(InterestMethod m) {
  switch (m) {
    case InterestMethod::exact_euclid: return "exact_euclid";
    case InterestMethod::exact_cosine: return "exact_cosine";
    case InterestMethod::gradient_cosine: return "gradient_cosine";
  }
  return "unknown";
}

inline InterestMethod interest_method_from_string(std::string_view s) {
  for (auto m : {InterestMethod::exact_euclid, InterestMethod::exact_cosine, InterestMethod::gradient_cosine})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown interest method '" + std::string(s) + "'");
}

struct InterestConfig {
  InterestMethod method = InterestMethod::gradient_cosine;
  /// Relaxation added to the cosine denominator.
  double epsilon = 1e-8;
  /// Step of the gradient surrogate counterfactual; the cosine score does not depend on it.
  double eta = 1.0;
  CfSolverConfig cf;

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidArgument("InterestConfig: epsilon must be positive");
    if (!(eta > 0.0)) throw InvalidArgument("InterestConfig: eta must be positive");
  }
};

struct InterestScore {
  double value = 0.0;
  /// True when a counterfactual could not be computed; value is then 0.
  bool flagged = false;
  std::string reason;
};

/// 2 - <a, b> / (||a|| ||b|| + epsilon). In (1 - kappa, 3], exactly 2 when
/// either vector is zero.
inline double relaxed_shifted_cosine(std::span<const double> a, std::span<const double> b, double epsilon) {
  return 2.0 - dot(a, b) / (norm2(a) * norm2(b) + epsilon);
}

/// x - eta * h(x) * grad f(x), with h(x) in {-1, +1}.
inline Vector surrogate_counterfactual(const Model& m, std::span<const double> x, double eta) {
  Vector g = gradient(m, x);
  const double s = sign_label(predict(m, x));
  Vector out(x.begin(), x.end());
  axpy(-eta * s, g, out);
  return out;
}

namespace detail {

/// Counterfactual delta towards the other class of the model's own
/// prediction. A sample exactly on a linear boundary is its own counterfactual.
inline CounterfactualResult own_flip_counterfactual(const Model& m, std::span<const double> x, const CfSolverConfig& cfg) {
  if (m.family == Family::linear_classifier && decision_function(m, x) == 0.0) {
    CounterfactualResult r;
    r.x_orig.assign(x.begin(), x.end());
    r.x_cf = r.x_orig;
    r.delta.assign(x.size(), 0.0);
    r.valid = true;
    return r;
  }
  return counterfactual(m, x, ClassTarget{detail::binary_flip(m, x)}, cfg);
}

}  // namespace detail

/// Interest from actual counterfactuals: Euclidean distance of the two deltas
/// or the relaxed shifted cosine between them.
inline InterestScore interest_exact(std::span<const double> x, const Model& h, const Model& h_new,
                                    const InterestConfig& cfg = {}) {
  cfg.validate();
  InterestScore out;
  CounterfactualResult a, b;
  try {
    a = detail::own_flip_counterfactual(h, x, cfg.cf);
    b = detail::own_flip_counterfactual(h_new, x, cfg.cf);
  } catch (const Error& e) {
    out.flagged = true;
    out.reason = e.what();
    return out;
  }
  if (!a.valid || !b.valid) {
    out.flagged = true;
    out.reason = "invalid counterfactual";
    return out;
  }
  if (cfg.method == InterestMethod::exact_euclid)
    out.value = psi_euclid(a.delta, b.delta);
  else
    out.value = relaxed_shifted_cosine(a.delta, b.delta, cfg.epsilon);
  return out;
}

/// Interest from the gradient surrogate directions -h(x) grad f(x) of both
/// models, compared with the relaxed shifted cosine.
inline InterestScore interest_gradient_surrogate(std::span<const double> x, const Model& h, const Model& h_new,
                                                 const InterestConfig& cfg = {}) {
  cfg.validate();
  Vector a = gradient(h, x);
  Vector b = gradient(h_new, x);
  const double sa = -sign_label(predict(h, x));
  const double sb = -sign_label(predict(h_new, x));
  for (double& v : a) v *= sa;
  for (double& v : b) v *= sb;
  return InterestScore{relaxed_shifted_cosine(a, b, cfg.epsilon), false, {}};
}

inline InterestScore interest(std::span<const double> x, const Model& h, const Model& h_new,
                              const InterestConfig& cfg = {}) {
  if (cfg.method == InterestMethod::gradient_cosine) return interest_gradient_surrogate(x, h, h_new, cfg);
  return interest_exact(x, h, h_new, cfg);
}

struct RankedSample {
  std::size_t index = 0;
  double score = 0.0;
};

/// Top-k rows by interest, descending; ties by ascending row index.
/// `candidates`, when non-empty, restricts the ranking to those rows.
inline std::vector<RankedSample> rank_samples(const Dataset& data, const Model& h, const Model& h_new, std::size_t k,
                                              const InterestConfig& cfg = {},
                                              const std::vector<std::size_t>& candidates = {}) {
  std::vector<std::size_t> rows = candidates;
  if (rows.empty())
    for (std::size_t i = 0; i < data.size(); ++i) rows.push_back(i);
  if (k == 0) throw InvalidArgument("k must be positive");
  if (k > rows.size())
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds the number of samples (" +
                          std::to_string(rows.size()) + ")");
  std::vector<RankedSample> scored;
  scored.reserve(rows.size());
  for (std::size_t i : rows) {
    if (i >= data.size()) throw InvalidArgument("candidate index out of range");
    scored.push_back({i, interest(data.features[i], h, h_new, cfg).value});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const RankedSample& a, const RankedSample& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  scored.resize(k);
  return scored;
}

}  // namespace cfdiff
