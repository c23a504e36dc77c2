#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/random.hpp"

// Checks for the two linear-model results relating counterfactual changes to
// weight changes. Models are homogeneous, h(x) = sign(w.x) with ||w|| = 1.

namespace cfdiff::theory {

/// Exact closest point on w.x = 0 (no margin): x - (w.x) w.
inline Vector closest_counterfactual(std::span<const double> w, std::span<const double> x) {
  Vector out(x.begin(), x.end());
  axpy(-dot(w, x), w, out);
  return out;
}

namespace detail {

/// Double-double accumulator (error-free TwoSum / fma TwoProduct).
struct CompensatedSum {
  double hi = 0.0;
  double lo = 0.0;

  void add(double v) {
    const double s = hi + v;
    const double bp = s - hi;
    lo += (hi - (s - bp)) + (v - bp);
    hi = s;
  }

  void add_product(double a, double b) {
    const double p = a * b;
    add(p);
    lo += std::fma(a, b, -p);
  }

  double value() const { return hi + lo; }
};

}  // namespace detail

/// Cosine between (x_cf - x) and (x_cf_new - x), written out in inner
/// products of x, x_cf and x_cf_new. The terms cancel heavily when x is far
/// from the origin compared to its distance to the boundaries, so the sums
/// are carried in double-double precision.
inline double cosine_from_counterfactuals(std::span<const double> x, std::span<const double> x_cf,
                                          std::span<const double> x_cf_new) {
  require_same_size(x, x_cf, "cosine_from_counterfactuals");
  require_same_size(x, x_cf_new, "cosine_from_counterfactuals");
  detail::CompensatedSum num, a, b;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num.add_product(x_cf[i], x_cf_new[i]);
    num.add_product(x[i], x[i]);
    num.add_product(-x_cf[i], x[i]);
    num.add_product(-x_cf_new[i], x[i]);
    a.add_product(x_cf[i], x_cf[i]);
    a.add_product(x[i], x[i]);
    a.add_product(-2.0 * x_cf[i], x[i]);
    b.add_product(x_cf_new[i], x_cf_new[i]);
    b.add_product(x[i], x[i]);
    b.add_product(-2.0 * x_cf_new[i], x[i]);
  }
  const double aa = a.value();
  const double bb = b.value();
  if (aa <= 0.0 || bb <= 0.0) throw InvalidArgument("undefined: counterfactual equals the input");
  return num.value() / std::sqrt(aa * bb);
}

/// The same quantity computed directly from the two deltas.
inline double cosine_of_deltas(std::span<const double> x, std::span<const double> x_cf,
                               std::span<const double> x_cf_new) {
  const Vector a = sub(x_cf, x);
  const Vector b = sub(x_cf_new, x);
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("undefined: counterfactual equals the input");
  return dot(a, b) / (na * nb);
}

struct BoundCheck {
  /// ||CF(x, h) - CF(x, h')||_2
  double lhs = 0.0;
  /// sqrt(8) ||x||_2 (1 - cos(w, w'))^(1/2)
  double rhs = 0.0;
};

inline void require_unit(std::span<const double> w) {
  if (std::abs(norm2(w) - 1.0) > 1e-12) throw InvalidArgument("non-unit weights: ||w||_2 must be 1");
}

inline BoundCheck cf_change_bound(std::span<const double> x, std::span<const double> w,
                                  std::span<const double> w_new) {
  require_unit(w);
  require_unit(w_new);
  require_same_size(w, x, "cf_change_bound");
  require_same_size(w_new, x, "cf_change_bound");
  const double cos = std::clamp(dot(w, w_new), -1.0, 1.0);
  BoundCheck out;
  out.lhs = distance(closest_counterfactual(w, x), closest_counterfactual(w_new, x));
  out.rhs = std::sqrt(8.0) * norm2(x) * std::sqrt(1.0 - cos);
  return out;
}

struct TheoremReport {
  std::size_t trials = 0;
  std::size_t dims = 0;
  /// max |cosine_from_counterfactuals - cos(w, w')| over trials.
  double max_abs_error = 0.0;
  /// Trials with lhs > rhs + 1e-12.
  std::size_t violations = 0;
  /// min (rhs - lhs) over trials.
  double worst_margin = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

inline Vector random_unit(Rng& rng, std::size_t d) {
  Vector v(d);
  double n = 0.0;
  while (n == 0.0) {
    for (auto& c : v) c = rng.normal();
    n = norm2(v);
  }
  for (auto& c : v) c /= n;
  return v;
}

/// Seeded randomized check of both results. Weight pairs are uniform on the
/// sphere and x ~ N(0, I). The cosine identity is checked at points where both
/// models give the same label (x is redrawn otherwise); the bound at every x.
/// With `identical_models`, w' = w.
inline TheoremReport verify_theorems(std::size_t trials, std::size_t dims, std::uint64_t seed,
                                     bool identical_models = false) {
  if (trials == 0) throw InvalidArgument("trials must be at least 1");
  if (dims < 2) throw InvalidArgument("dims must be at least 2");
  Rng rng(seed);
  TheoremReport rep;
  rep.trials = trials;
  rep.dims = dims;
  rep.seed = seed;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector w = random_unit(rng, dims);
    const Vector w_new = identical_models ? w : random_unit(rng, dims);
    Vector x(dims);
    for (auto& c : x) c = rng.normal();

    const auto bound = cf_change_bound(x, w, w_new);
    if (bound.lhs > bound.rhs + 1e-12) ++rep.violations;
    rep.worst_margin = std::min(rep.worst_margin, bound.rhs - bound.lhs);

    auto agree = [&](const Vector& p) {
      const double a = dot(w, p), b = dot(w_new, p);
      return a != 0.0 && b != 0.0 && (a > 0) == (b > 0);
    };
    Vector xa = x;
    for (int tries = 0; tries < 100 && !agree(xa); ++tries)
      for (auto& c : xa) c = rng.normal();
    // Nearly opposite weights leave almost no agreeing region; both models
    // give w + w' a positive score, so sample around it.
    const Vector mid = add(w, w_new);
    const double spread = 0.1 * norm2(mid);
    if (spread == 0.0) continue;
    while (!agree(xa))
      for (std::size_t i = 0; i < dims; ++i) xa[i] = mid[i] + spread * rng.normal();
    const double est = cosine_from_counterfactuals(xa, closest_counterfactual(w, xa), closest_counterfactual(w_new, xa));
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(est - dot(w, w_new)));
  }
  return rep;
}

struct NonlinearProbe {
  std::size_t samples = 0;
  double mean_abs_gap = 0.0;
  double max_abs_gap = 0.0;
};

/// Uses the cosine-from-counterfactuals estimator on a nonlinear pair of
/// models and compares it with the cosine of the oriented local normals
/// h(x) grad f(x). Reported only; no accuracy guarantee exists here.
inline NonlinearProbe nonlinear_cosine_probe(const Model& h, const Model& h_new, const Dataset& data,
                                             const CfSolverConfig& cfg = {}) {
  NonlinearProbe out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.features[i];
    if (predict(h, x) != predict(h_new, x)) continue;
    const auto a = counterfactual(h, x, ClassTarget{cfdiff::detail::binary_flip(h, x)}, cfg);
    const auto b = counterfactual(h_new, x, ClassTarget{cfdiff::detail::binary_flip(h_new, x)}, cfg);
    if (!a.valid || !b.valid) continue;
    const double est = cosine_from_counterfactuals(x, a.x_cf, b.x_cf);
    const Vector ga = gradient(h, x);
    const Vector gb = gradient(h_new, x);
    const double local = dot(ga, gb) / (norm2(ga) * norm2(gb));
    const double gap = std::abs(est - local);
    out.mean_abs_gap += gap;
    out.max_abs_gap = std::max(out.max_abs_gap, gap);
    ++out.samples;
  }
  if (out.samples > 0) out.mean_abs_gap /= static_cast<double>(out.samples);
  return out;
}

}  // namespace cfdiff::theory
