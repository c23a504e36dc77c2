#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cfdiff/linalg.hpp"

namespace cfdiff {

struct GradientDescentOptions {
  std::size_t max_iters = 5000;
  /// Initial trial step; afterwards each iteration starts from twice the last accepted step.
  double step_size = 1.0;
  /// Stop once the objective decreases by less than tolerance * (1 + |f|).
  double tolerance = 1e-8;
  double armijo_c = 1e-4;
  bool record_trace = false;
};

struct GradientDescentResult {
  Vector theta;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective after every accepted step, starting with the initial value.
  std::vector<double> trace;
};

/// Full-batch gradient descent with Armijo backtracking (step halving).
/// `fn(theta, grad)` returns the objective and writes the gradient into `grad`.
/// Every accepted step satisfies the Armijo condition, so the objective
/// sequence is non-increasing.
template <typename Objective>
GradientDescentResult gradient_descent(Objective&& fn, Vector theta, const GradientDescentOptions& opts) {
  GradientDescentResult res;
  Vector grad(theta.size(), 0.0);
  double f = fn(theta, grad);
  if (opts.record_trace) res.trace.push_back(f);
  double step = opts.step_size;
  Vector trial(theta.size());
  Vector trial_grad(theta.size());
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const double gg = dot(grad, grad);
    if (gg == 0.0 || !std::isfinite(gg)) {
      res.converged = gg == 0.0;
      break;
    }
    double t = step;
    double f_trial = 0.0;
    bool accepted = false;
    while (t > 1e-30) {
      for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] - t * grad[i];
      f_trial = fn(trial, trial_grad);
      if (std::isfinite(f_trial) && f_trial <= f - opts.armijo_c * t * gg) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No descent possible at floating-point resolution: stationary for our purposes.
      res.converged = true;
      break;
    }
    const double decrease = f - f_trial;
    theta.swap(trial);
    grad.swap(trial_grad);
    f = f_trial;
    res.iterations = it + 1;
    if (opts.record_trace) res.trace.push_back(f);
    step = 2.0 * t;
    if (decrease <= opts.tolerance * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  res.theta = std::move(theta);
  res.objective = f;
  return res;
}

}  // namespace cfdiff
