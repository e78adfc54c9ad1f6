/*
 * Copyright 2026 The solarcal Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense BFGS with a backtracking Armijo line search.

#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace solarcal::optim {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-9;   // on max |g_i| relative to 1 + |f|
  double value_tolerance = 1e-14;     // relative decrease between iterations
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
};

template <typename Vector>
struct BfgsResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f. `objective(x, grad)` returns f(x) and writes the gradient.
/// Non-finite values are treated as +inf and rejected by the line search.
template <typename Vector, typename Objective>
BfgsResult<Vector> minimize_bfgs(Objective&& objective, Vector x0, const BfgsOptions& opts = {}) {
  using Scalar = typename Vector::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Vector::RowsAtCompileTime, Vector::RowsAtCompileTime>;
  const Eigen::Index n = x0.size();

  BfgsResult<Vector> res;
  res.x = x0;
  Vector g(n), g_new(n);
  double f = objective(res.x, g);
  res.value = f;
  if (!std::isfinite(f) || !g.allFinite()) return res;

  Matrix H = Matrix::Identity(n, n);
  bool scaled = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    if (g.cwiseAbs().maxCoeff() <= opts.gradient_tolerance * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
    Vector dir = -H * g;
    double slope = g.dot(dir);
    if (!(slope < 0)) {  // lost descent; restart from steepest descent
      H.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    Vector x_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      x_new = res.x + step * dir;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= f + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= opts.backtrack;
    }
    if (!accepted) {
      res.converged = true;  // no further decrease attainable in floating point
      break;
    }
    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = Matrix::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix I = Matrix::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const double prev = f;
    res.x = x_new;
    g = g_new;
    f = f_new;
    res.value = f;
    if (prev - f <= opts.value_tolerance * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace solarcal::optim
