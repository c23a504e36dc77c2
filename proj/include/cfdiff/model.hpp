#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cfdiff/dataset.hpp"
#include "cfdiff/error.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/optimize.hpp"

namespace cfdiff {

enum class Family { linear_classifier, logistic_regression, linear_regression, gaussian_nb, decision_tree };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::linear_classifier: return "linear_classifier";
    case Family::logistic_regression: return "logistic_regression";
    case Family::linear_regression: return "linear_regression";
    case Family::gaussian_nb: return "gaussian_nb";
    case Family::decision_tree: return "decision_tree";
  }
  return "unknown";
}

inline Family family_from_string(std::string_view s) {
  for (Family f : {Family::linear_classifier, Family::logistic_regression, Family::linear_regression,
                   Family::gaussian_nb, Family::decision_tree})
    if (to_string(f) == s) return f;
  throw InvalidArgument("unknown model family '" + std::string(s) + "'");
}

inline bool is_differentiable(Family f) { return f != Family::decision_tree; }

/// Families trained by gradient descent on a parameter vector (w, b).
inline bool is_linear(Family f) {
  return f == Family::linear_classifier || f == Family::logistic_regression || f == Family::linear_regression;
}

/// f(x) = w.x + b. For linear_classifier, ||w||_2 = 1.
struct LinearParams {
  Vector w;
  double b = 0.0;
};

struct GaussianClassStats {
  /// Prior probability (masses sum to one over classes).
  double mass = 0.0;
  Vector mean;
  /// Per-feature variance without smoothing.
  Vector var;
};

struct GaussianNbParams {
  std::vector<GaussianClassStats> classes;
  /// Added to every variance when evaluating the likelihood.
  double var_smoothing = 1e-9;
};

struct TreeNode {
  /// -1 marks a leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
};

struct TreeConfig {
  std::size_t max_depth = 5;
  std::size_t min_samples_leaf = 3;
};

/// A CART classifier. The training rows are kept because adapting a tree
/// means refitting it on the union of old and new data.
struct TreeParams {
  std::vector<TreeNode> nodes;
  TreeConfig config;
  std::vector<Vector> train_x;
  std::vector<Label> train_y;
  Vector train_w;
};

using ModelParams = std::variant<LinearParams, GaussianNbParams, TreeParams>;

struct Model {
  Family family = Family::linear_classifier;
  std::size_t n_features = 0;
  /// Zero for regression.
  std::size_t n_classes = 2;
  ModelParams params;

  bool is_classifier() const { return family != Family::linear_regression; }
  const LinearParams& linear() const { return std::get<LinearParams>(params); }
  const GaussianNbParams& gnb() const { return std::get<GaussianNbParams>(params); }
  const TreeParams& tree() const { return std::get<TreeParams>(params); }
};

/// Linear classifier with the weights rescaled to unit Euclidean norm.
inline Model make_linear_classifier(Vector w, double b = 0.0) {
  const double n = norm2(w);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("linear_classifier needs a nonzero finite weight vector");
  for (double& v : w) v /= n;
  const std::size_t d = w.size();
  return Model{Family::linear_classifier, d, 2, LinearParams{std::move(w), b / n}};
}

inline Model make_logistic_regression(Vector coef, double intercept = 0.0) {
  const std::size_t d = coef.size();
  return Model{Family::logistic_regression, d, 2, LinearParams{std::move(coef), intercept}};
}

inline Model make_linear_regression(Vector coef, double intercept = 0.0) {
  const std::size_t d = coef.size();
  return Model{Family::linear_regression, d, 0, LinearParams{std::move(coef), intercept}};
}

inline Model make_gaussian_nb(GaussianNbParams p) {
  if (p.classes.size() < 2) throw InvalidArgument("gaussian_nb needs at least two classes");
  const std::size_t d = p.classes.front().mean.size();
  for (const auto& c : p.classes) {
    if (c.mean.size() != d || c.var.size() != d) throw InvalidArgument("gaussian_nb: inconsistent dimensions");
    for (double v : c.var)
      if (!(v + p.var_smoothing > 0.0)) throw InvalidArgument("gaussian_nb: variances must be positive");
  }
  const std::size_t k = p.classes.size();
  return Model{Family::gaussian_nb, d, k, std::move(p)};
}

inline Model make_tree(std::vector<TreeNode> nodes, std::size_t n_features, std::size_t n_classes) {
  if (nodes.empty()) throw InvalidArgument("decision_tree needs at least one node");
  for (const auto& n : nodes) {
    if (n.feature >= 0) {
      if (static_cast<std::size_t>(n.feature) >= n_features) throw InvalidArgument("tree tests unknown feature");
      if (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= nodes.size() ||
          static_cast<std::size_t>(n.right) >= nodes.size())
        throw InvalidArgument("tree child index out of range");
    }
  }
  TreeParams p;
  p.nodes = std::move(nodes);
  return Model{Family::decision_tree, n_features, n_classes, std::move(p)};
}

inline void check_dim(const Model& m, std::span<const double> x) {
  if (x.size() != m.n_features)
    throw InvalidArgument("dimension mismatch: model expects " + std::to_string(m.n_features) + " features, got " +
                          std::to_string(x.size()));
}

namespace detail {

inline void require_differentiable(const Model& m) {
  if (!is_differentiable(m.family))
    throw Unsupported("non-differentiable family: " + to_string(m.family) + " has no continuous decision function");
}

/// log N(x | mean, var) summed over features, plus log prior.
inline double gnb_joint_log_likelihood(const GaussianNbParams& p, std::size_t c, std::span<const double> x) {
  const auto& cls = p.classes[c];
  if (cls.mass <= 0.0) return -std::numeric_limits<double>::infinity();
  double s = std::log(cls.mass);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = cls.var[j] + p.var_smoothing;
    const double diff = x[j] - cls.mean[j];
    s += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * diff * diff / v;
  }
  return s;
}

inline void gnb_joint_gradient(const GaussianNbParams& p, std::size_t c, std::span<const double> x, Vector& g) {
  const auto& cls = p.classes[c];
  g.assign(x.size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) g[j] = -(x[j] - cls.mean[j]) / (cls.var[j] + p.var_smoothing);
}

inline int tree_leaf(const TreeParams& p, std::span<const double> x) {
  int node = 0;
  while (p.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& n = p.nodes[static_cast<std::size_t>(node)];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return node;
}

inline double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double a : v) hi = std::max(hi, a);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double a : v) s += std::exp(a - hi);
  return hi + std::log(s);
}

}  // namespace detail

/// Real-valued score f(x). Binary classifiers: positive means class 1.
/// gaussian_nb: log p(1|x) - log p(0|x). Regression: the prediction.
inline double decision_function(const Model& m, std::span<const double> x) {
  check_dim(m, x);
  detail::require_differentiable(m);
  if (is_linear(m.family)) return dot(m.linear().w, x) + m.linear().b;
  const auto& p = m.gnb();
  if (p.classes.size() != 2) throw Unsupported("decision_function is defined for binary gaussian_nb only");
  return detail::gnb_joint_log_likelihood(p, 1, x) - detail::gnb_joint_log_likelihood(p, 0, x);
}

/// Analytic gradient of decision_function with respect to x.
inline Vector gradient(const Model& m, std::span<const double> x) {
  check_dim(m, x);
  detail::require_differentiable(m);
  if (is_linear(m.family)) return m.linear().w;
  const auto& p = m.gnb();
  if (p.classes.size() != 2) throw Unsupported("gradient is defined for binary gaussian_nb only");
  Vector g1, g0;
  detail::gnb_joint_gradient(p, 1, x, g1);
  detail::gnb_joint_gradient(p, 0, x, g0);
  return sub(g1, g0);
}

/// Class index (classification) or predicted value (regression). A binary
/// decision value of exactly zero maps to class 1.
inline Label predict(const Model& m, std::span<const double> x) {
  check_dim(m, x);
  switch (m.family) {
    case Family::linear_regression:
      return decision_function(m, x);
    case Family::linear_classifier:
    case Family::logistic_regression:
      return decision_function(m, x) >= 0.0 ? 1.0 : 0.0;
    case Family::gaussian_nb: {
      const auto& p = m.gnb();
      if (p.classes.size() == 2) return decision_function(m, x) >= 0.0 ? 1.0 : 0.0;
      std::size_t best = 0;
      double best_ll = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < p.classes.size(); ++c) {
        const double ll = detail::gnb_joint_log_likelihood(p, c, x);
        if (ll > best_ll) {
          best_ll = ll;
          best = c;
        }
      }
      return static_cast<double>(best);
    }
    case Family::decision_tree: {
      const auto& p = m.tree();
      return p.nodes[static_cast<std::size_t>(detail::tree_leaf(p, x))].label;
    }
  }
  return 0.0;
}

/// +1 for class 1, -1 for class 0: the h(x) = sign(f(x)) convention.
inline int sign_label(Label y) { return y == 1.0 ? 1 : -1; }

/// Score that is positive exactly where the model predicts `target_class`:
/// +/- f for binary differentiable models, one-vs-rest log-odds
/// log p(t|x) - log sum_{c != t} p(c|x) for multiclass gaussian_nb.
inline double target_score(const Model& m, std::span<const double> x, std::size_t target_class) {
  check_dim(m, x);
  detail::require_differentiable(m);
  if (!m.is_classifier()) throw Unsupported("target_score needs a classifier");
  if (target_class >= m.n_classes) throw InvalidArgument("target class out of range");
  if (m.n_classes == 2) return target_class == 1 ? decision_function(m, x) : -decision_function(m, x);
  const auto& p = m.gnb();
  Vector rest;
  for (std::size_t c = 0; c < p.classes.size(); ++c)
    if (c != target_class) rest.push_back(detail::gnb_joint_log_likelihood(p, c, x));
  return detail::gnb_joint_log_likelihood(p, target_class, x) - detail::log_sum_exp(rest);
}

inline Vector target_score_gradient(const Model& m, std::span<const double> x, std::size_t target_class) {
  check_dim(m, x);
  detail::require_differentiable(m);
  if (target_class >= m.n_classes) throw InvalidArgument("target class out of range");
  if (m.n_classes == 2) {
    Vector g = gradient(m, x);
    if (target_class == 0)
      for (double& v : g) v = -v;
    return g;
  }
  const auto& p = m.gnb();
  Vector lls;
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < p.classes.size(); ++c)
    if (c != target_class) {
      lls.push_back(detail::gnb_joint_log_likelihood(p, c, x));
      idx.push_back(c);
    }
  const double lse = detail::log_sum_exp(lls);
  Vector g;
  detail::gnb_joint_gradient(p, target_class, x, g);
  Vector gc;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double weight = std::isfinite(lls[k]) ? std::exp(lls[k] - lse) : 0.0;
    if (weight == 0.0) continue;
    detail::gnb_joint_gradient(p, idx[k], x, gc);
    axpy(-weight, gc, g);
  }
  return g;
}

inline double accuracy(const Model& m, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) ok += predict(m, data.features[i]) == data.labels[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Losses shared by training and adaptation

/// log(1 + exp(-z)) without overflow.
inline double softplus_neg(double z) { return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

/// d/dz log(1 + exp(-z)) = -sigmoid(-z).
inline double softplus_neg_derivative(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

/// Sum over rows of weight_i * loss_i for a linear family with parameters
/// theta = (w, b), plus its gradient. Logistic loss for classifiers, squared
/// error for regression.
inline double linear_data_loss(Family family, std::span<const double> theta, const std::vector<Vector>& xs,
                               std::span<const Label> ys, std::span<const double> weights, Vector& grad) {
  const std::size_t d = theta.size() - 1;
  grad.assign(theta.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const auto& x = xs[i];
    double f = theta[d];
    for (std::size_t j = 0; j < d; ++j) f += theta[j] * x[j];
    double dl_df = 0.0;
    if (family == Family::linear_regression) {
      const double r = f - ys[i];
      total += weights[i] * r * r;
      dl_df = 2.0 * r;
    } else {
      const double s = ys[i] == 1.0 ? 1.0 : -1.0;
      total += weights[i] * softplus_neg(s * f);
      dl_df = s * softplus_neg_derivative(s * f);
    }
    const double c = weights[i] * dl_df;
    for (std::size_t j = 0; j < d; ++j) grad[j] += c * x[j];
    grad[d] += c;
  }
  return total;
}

inline Vector flatten(const LinearParams& p) {
  Vector theta = p.w;
  theta.push_back(p.b);
  return theta;
}

inline LinearParams unflatten(std::span<const double> theta) {
  return LinearParams{Vector(theta.begin(), theta.end() - 1), theta.back()};
}

}  // namespace cfdiff
