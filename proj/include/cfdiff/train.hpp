#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "cfdiff/dataset.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/optimize.hpp"

namespace cfdiff {

struct FitOptions {
  /// Ridge penalty on w (not b) for the logistic families, relative to the mean loss.
  double l2 = 1e-4;
  std::size_t max_iters = 5000;
  double tolerance = 1e-10;
  TreeConfig tree;
};

namespace detail {

inline Vector resolve_weights(const Dataset& data, const std::optional<Vector>& weights) {
  if (!weights) return Vector(data.size(), 1.0);
  if (weights->size() != data.size()) throw InvalidArgument("sample weight count does not match sample count");
  double total = 0.0;
  for (double w : *weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("sample weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw InvalidArgument("zero total sample weight");
  return *weights;
}

inline void require_two_classes(const Dataset& data, std::span<const double> w) {
  std::vector<double> mass;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = static_cast<std::size_t>(data.labels[i]);
    if (mass.size() <= c) mass.resize(c + 1, 0.0);
    mass[c] += w[i];
  }
  std::size_t present = 0;
  for (double m : mass) present += m > 0.0 ? 1 : 0;
  if (present < 2) throw InvalidArgument("classification data contains a single class");
}

// Weighted normalized sufficient statistics per class: mass, sum x, sum x^2
// (each divided by the total weight).
struct ClassMoments {
  double n = 0.0;
  Vector s;
  Vector q;
};

inline std::vector<ClassMoments> class_moments(const std::vector<Vector>& xs, std::span<const Label> ys,
                                               std::span<const double> w, std::size_t n_classes,
                                               std::size_t n_features) {
  std::vector<ClassMoments> m(n_classes, ClassMoments{0.0, Vector(n_features, 0.0), Vector(n_features, 0.0)});
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (w[i] == 0.0) continue;
    auto& cm = m[static_cast<std::size_t>(ys[i])];
    cm.n += w[i];
    for (std::size_t j = 0; j < n_features; ++j) {
      cm.s[j] += w[i] * xs[i][j];
      cm.q[j] += w[i] * xs[i][j] * xs[i][j];
    }
    total += w[i];
  }
  for (auto& cm : m) {
    cm.n /= total;
    for (double& v : cm.s) v /= total;
    for (double& v : cm.q) v /= total;
  }
  return m;
}

inline GaussianNbParams gnb_from_moments(const std::vector<ClassMoments>& m, double var_smoothing) {
  GaussianNbParams p;
  p.var_smoothing = var_smoothing;
  for (const auto& cm : m) {
    GaussianClassStats st;
    st.mass = cm.n;
    const std::size_t d = cm.s.size();
    st.mean.assign(d, 0.0);
    st.var.assign(d, 0.0);
    if (cm.n > 0.0) {
      for (std::size_t j = 0; j < d; ++j) {
        st.mean[j] = cm.s[j] / cm.n;
        st.var[j] = std::max(0.0, cm.q[j] / cm.n - st.mean[j] * st.mean[j]);
      }
    } else {
      st.var.assign(d, 1.0);
    }
    p.classes.push_back(std::move(st));
  }
  return p;
}

inline std::vector<ClassMoments> moments_of(const GaussianNbParams& p) {
  std::vector<ClassMoments> m;
  for (const auto& c : p.classes) {
    ClassMoments cm{c.mass, Vector(c.mean.size()), Vector(c.mean.size())};
    for (std::size_t j = 0; j < c.mean.size(); ++j) {
      cm.s[j] = c.mass * c.mean[j];
      cm.q[j] = c.mass * (c.var[j] + c.mean[j] * c.mean[j]);
    }
    m.push_back(std::move(cm));
  }
  return m;
}

/// 1e-9 times the largest per-feature variance of the pooled data.
inline double gnb_smoothing(const std::vector<Vector>& xs, std::span<const double> w, std::size_t d) {
  double total = 0.0;
  Vector s(d, 0.0), q(d, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += w[i];
    for (std::size_t j = 0; j < d; ++j) {
      s[j] += w[i] * xs[i][j];
      q[j] += w[i] * xs[i][j] * xs[i][j];
    }
  }
  double hi = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double mean = s[j] / total;
    hi = std::max(hi, q[j] / total - mean * mean);
  }
  return 1e-9 * (hi > 0.0 ? hi : 1.0);
}

inline double gini(std::span<const double> class_w, double total) {
  if (total <= 0.0) return 0.0;
  double s = 1.0;
  for (double c : class_w) s -= (c / total) * (c / total);
  return s;
}

inline int majority(std::span<const double> class_w) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < class_w.size(); ++c)
    if (class_w[c] > class_w[best]) best = c;
  return static_cast<int>(best);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<Vector>& xs, std::span<const Label> ys, std::span<const double> w,
              std::size_t n_classes, std::size_t n_features, const TreeConfig& cfg)
      : xs_(xs), ys_(ys), w_(w), k_(n_classes), d_(n_features), cfg_(cfg) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < xs_.size(); ++i)
      if (w_[i] > 0.0) idx.push_back(i);
    grow(idx, 0);
    return std::move(nodes_);
  }

 private:
  int grow(const std::vector<std::size_t>& idx, std::size_t depth) {
    Vector class_w(k_, 0.0);
    double total = 0.0;
    for (std::size_t i : idx) {
      class_w[static_cast<std::size_t>(ys_[i])] += w_[i];
      total += w_[i];
    }
    const int me = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, majority(class_w)});
    const double parent_impurity = gini(class_w, total);
    if (depth >= cfg_.max_depth || parent_impurity <= 0.0 || idx.size() < 2 * cfg_.min_samples_leaf) return me;

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = idx;
    Vector left_w(k_);
    for (std::size_t f = 0; f < d_; ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return xs_[a][f] < xs_[b][f]; });
      std::fill(left_w.begin(), left_w.end(), 0.0);
      double left_total = 0.0;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const std::size_t i = order[pos];
        left_w[static_cast<std::size_t>(ys_[i])] += w_[i];
        left_total += w_[i];
        const double a = xs_[i][f];
        const double b = xs_[order[pos + 1]][f];
        if (!(a < b)) continue;
        const std::size_t n_left = pos + 1;
        if (n_left < cfg_.min_samples_leaf || order.size() - n_left < cfg_.min_samples_leaf) continue;
        Vector right_w(k_);
        for (std::size_t c = 0; c < k_; ++c) right_w[c] = class_w[c] - left_w[c];
        const double right_total = total - left_total;
        const double child = (left_total * gini(left_w, left_total) + right_total * gini(right_w, right_total)) / total;
        const double gain = parent_impurity - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (a + b);
          if (!(mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return me;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx)
      (xs_[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
    nodes_[static_cast<std::size_t>(me)].feature = best_feature;
    nodes_[static_cast<std::size_t>(me)].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(me)].left = l;
    nodes_[static_cast<std::size_t>(me)].right = r;
    return me;
  }

  const std::vector<Vector>& xs_;
  std::span<const Label> ys_;
  std::span<const double> w_;
  std::size_t k_;
  std::size_t d_;
  TreeConfig cfg_;
  std::vector<TreeNode> nodes_;
};

inline Model fit_tree_rows(std::vector<Vector> xs, std::vector<Label> ys, Vector w, std::size_t n_classes,
                           std::size_t n_features, const TreeConfig& cfg) {
  TreeBuilder builder(xs, ys, w, n_classes, n_features, cfg);
  Model m = make_tree(builder.build(), n_features, n_classes);
  auto& p = std::get<TreeParams>(m.params);
  p.config = cfg;
  p.train_x = std::move(xs);
  p.train_y = std::move(ys);
  p.train_w = std::move(w);
  return m;
}

inline LinearParams fit_logistic(const Dataset& data, std::span<const double> w, const FitOptions& opts) {
  const std::size_t d = data.n_features();
  double total = 0.0;
  for (double v : w) total += v;
  auto objective = [&](const Vector& theta, Vector& grad) {
    double f = linear_data_loss(Family::logistic_regression, theta, data.features, data.labels, w, grad) / total;
    for (double& g : grad) g /= total;
    for (std::size_t j = 0; j < d; ++j) {
      f += 0.5 * opts.l2 * theta[j] * theta[j];
      grad[j] += opts.l2 * theta[j];
    }
    return f;
  };
  GradientDescentOptions gd;
  gd.max_iters = opts.max_iters;
  gd.tolerance = opts.tolerance;
  auto res = gradient_descent(objective, Vector(d + 1, 0.0), gd);
  return unflatten(res.theta);
}

inline LinearParams fit_least_squares(const Dataset& data, std::span<const double> w) {
  const std::size_t d = data.n_features();
  const std::size_t n = d + 1;
  std::vector<double> a(n * n, 0.0);
  Vector rhs(n, 0.0);
  Vector z(n);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) z[j] = data.features[i][j];
    z[d] = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      rhs[r] += w[i] * z[r] * data.labels[i];
      for (std::size_t c = 0; c < n; ++c) a[r * n + c] += w[i] * z[r] * z[c];
    }
  }
  return unflatten(solve_linear_system(std::move(a), std::move(rhs)));
}

}  // namespace detail

/// Trains a model of the requested family. Deterministic for fixed inputs.
inline Model fit(Family family, const Dataset& data, const std::optional<Vector>& sample_weights = std::nullopt,
                 const FitOptions& opts = {}) {
  if (data.empty()) throw InvalidArgument("cannot fit on an empty dataset");
  data.validate();
  const Vector w = detail::resolve_weights(data, sample_weights);
  const std::size_t d = data.n_features();
  const bool wants_classification = family != Family::linear_regression;
  if (wants_classification != (data.task == Task::classification))
    throw InvalidArgument(to_string(family) + " does not match the dataset task");

  if (family == Family::linear_regression) {
    LinearParams p = detail::fit_least_squares(data, w);
    return make_linear_regression(std::move(p.w), p.b);
  }

  detail::require_two_classes(data, w);
  const std::size_t k = std::max<std::size_t>(2, data.n_classes());
  switch (family) {
    case Family::linear_classifier:
    case Family::logistic_regression: {
      if (k != 2) throw InvalidArgument(to_string(family) + " is binary only");
      LinearParams p = detail::fit_logistic(data, w, opts);
      if (family == Family::linear_classifier) return make_linear_classifier(std::move(p.w), p.b);
      return make_logistic_regression(std::move(p.w), p.b);
    }
    case Family::gaussian_nb: {
      auto mom = detail::class_moments(data.features, data.labels, w, k, d);
      return make_gaussian_nb(detail::gnb_from_moments(mom, detail::gnb_smoothing(data.features, w, d)));
    }
    case Family::decision_tree:
      return detail::fit_tree_rows(data.features, data.labels, w, k, d, opts.tree);
    default:
      break;
  }
  throw InvalidArgument("unsupported family");
}

}  // namespace cfdiff
