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

// Normal distribution left-censored at zero.
//
// X = max(0, Y) with Y ~ N(mu, sigma^2). The law has an atom of mass
// Phi(-mu/sigma) at the origin and the Gaussian density on (0, inf).
// All functions are pure and templated on the scalar type.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "solarcal/error.hpp"
#include "solarcal/normal.hpp"

namespace solarcal::cn0 {

template <typename Scalar>
struct Params {
  Scalar mu{0};
  Scalar sigma{1};

  bool valid() const { return std::isfinite(mu) && std::isfinite(sigma) && sigma > Scalar(0); }
};

using ParamsD = Params<double>;

template <typename Scalar>
struct Gradient {
  Scalar d_mu{0};
  Scalar d_sigma{0};
};

/// Right-continuous CDF; zero on the negative half-line.
template <typename Scalar>
Scalar cdf(const Params<Scalar>& p, Scalar x) {
  if (x < Scalar(0)) return Scalar(0);
  return normal::cdf((x - p.mu) / p.sigma);
}

/// Mass of the atom at zero.
template <typename Scalar>
Scalar point_mass(const Params<Scalar>& p) {
  return normal::cdf(-p.mu / p.sigma);
}

/// Mean of the censored law, mu*Phi(mu/sigma) + sigma*phi(mu/sigma).
template <typename Scalar>
Scalar mean_kappa(const Params<Scalar>& p) {
  const Scalar r = p.mu / p.sigma;
  return std::max(Scalar(0), p.mu * normal::cdf(r) + p.sigma * normal::pdf(r));
}

template <typename Scalar>
Scalar quantile(const Params<Scalar>& p, Scalar level) {
  if (!(level > Scalar(0) && level < Scalar(1)))
    throw std::domain_error("cn0::quantile: level must lie in (0, 1)");
  return std::max(Scalar(0), p.mu + p.sigma * normal::quantile(level));
}

/// Quantiles at the equidistant levels k/(K+1), k = 1..K (ascending).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> quantile_ensemble(const Params<Scalar>& p, int members = 8) {
  if (members < 1) throw std::invalid_argument("cn0::quantile_ensemble: need at least one member");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(members);
  for (int k = 0; k < members; ++k)
    out[k] = quantile(p, Scalar(k + 1) / Scalar(members + 1));
  return out;
}

// CRPS in standardized coordinates, with z = (x - mu)/sigma and
// l = -mu/sigma <= z. The uncensored Gaussian score
//   c(z) = z(2Phi(z) - 1) + 2phi(z) - 1/sqrt(pi)
// minus the integral of Phi^2 over (-inf, l], which is
//   l Phi(l)^2 + 2 phi(l) Phi(l) - Phi(sqrt2 l)/sqrt(pi).
template <typename Scalar>
Scalar crps(const Params<Scalar>& p, Scalar x) {
  using std::numbers::sqrt2_v;
  const Scalar z = (x - p.mu) / p.sigma;
  const Scalar l = -p.mu / p.sigma;
  const Scalar Phi_z = normal::cdf(z);
  const Scalar Phi_l = normal::cdf(l);
  const Scalar phi_z = normal::pdf(z);
  const Scalar phi_l = normal::pdf(l);
  const Scalar inv_sqrt_pi = normal::kInvSqrtPi<Scalar>;

  const Scalar gauss = z * (Scalar(2) * Phi_z - Scalar(1)) + Scalar(2) * phi_z - inv_sqrt_pi;
  const Scalar censored = l * Phi_l * Phi_l + Scalar(2) * phi_l * Phi_l -
                          normal::cdf(sqrt2_v<Scalar> * l) * inv_sqrt_pi;
  return std::max(Scalar(0), p.sigma * (gauss - censored));
}

/// Analytic partial derivatives of crps with respect to mu and sigma.
template <typename Scalar>
Gradient<Scalar> crps_grad(const Params<Scalar>& p, Scalar x) {
  using std::numbers::sqrt2_v;
  const Scalar z = (x - p.mu) / p.sigma;
  const Scalar l = -p.mu / p.sigma;
  const Scalar Phi_z = normal::cdf(z);
  const Scalar Phi_l = normal::cdf(l);
  Gradient<Scalar> g;
  g.d_mu = Phi_l * Phi_l - (Scalar(2) * Phi_z - Scalar(1));
  g.d_sigma = Scalar(2) * normal::pdf(z) - normal::kInvSqrtPi<Scalar> -
              Scalar(2) * normal::pdf(l) * Phi_l +
              normal::cdf(sqrt2_v<Scalar> * l) * normal::kInvSqrtPi<Scalar>;
  return g;
}

/// Randomized PIT; u in [0,1] spreads the atom at zero uniformly.
template <typename Scalar>
Scalar pit(const Params<Scalar>& p, Scalar x, Scalar u) {
  if (x < Scalar(0)) throw DataError("cn0::pit: observation must be non-negative");
  if (x > Scalar(0)) return cdf(p, x);
  return u * point_mass(p);
}

}  // namespace solarcal::cn0
