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

#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace solarcal::normal {

template <typename Scalar>
inline constexpr Scalar kInvSqrt2 = Scalar(0.70710678118654752440084436210485);
template <typename Scalar>
inline constexpr Scalar kInvSqrt2Pi = Scalar(0.39894228040143267793994605993438);
template <typename Scalar>
inline constexpr Scalar kInvSqrtPi = Scalar(0.56418958354775628694807945156077);

/// Standard normal density.
template <typename Scalar>
Scalar pdf(Scalar z) {
  return kInvSqrt2Pi<Scalar> * std::exp(Scalar(-0.5) * z * z);
}

/// Standard normal CDF through erfc, accurate in both tails.
template <typename Scalar>
Scalar cdf(Scalar z) {
  return Scalar(0.5) * std::erfc(-z * kInvSqrt2<Scalar>);
}

namespace detail {

// Acklam's rational approximation (relative error ~1e-9), used as the
// starting point for Halley refinement against erfc.
inline double quantile_seed(double p) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Inverse standard normal CDF. Returns -inf/+inf at 0/1, NaN outside [0,1].
template <typename Scalar>
Scalar quantile(Scalar p) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) return std::numeric_limits<Scalar>::quiet_NaN();
  if (p == Scalar(0)) return -std::numeric_limits<Scalar>::infinity();
  if (p == Scalar(1)) return std::numeric_limits<Scalar>::infinity();

  const double pd = static_cast<double>(p);
  // Work in the lower half so the residual is computed without cancellation.
  const bool upper = pd > 0.5;
  const double pl = upper ? 1.0 - pd : pd;
  double x = detail::quantile_seed(pl);
  for (int it = 0; it < 2; ++it) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - pl;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return static_cast<Scalar>(upper ? -x : x);
}

}  // namespace solarcal::normal
