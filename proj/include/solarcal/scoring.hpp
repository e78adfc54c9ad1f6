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

// Proper scores and calibration diagnostics for predictive distributions
// and finite ensembles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "solarcal/cn0.hpp"
#include "solarcal/rng.hpp"

namespace solarcal::scoring {

/// Ensembles up to this size are scored with the direct double sum.
inline constexpr std::size_t kDirectCrpsMaxMembers = 64;

/// Ensemble CRPS through the sorted-member identity
///   sum_k sum_l |f_k - f_l| = 2 sum_i (2i - K - 1) f_(i).
/// O(K log K); agrees with the double sum up to rounding.
template <typename Scalar>
Scalar crps_ensemble_sorted(std::span<const Scalar> members, Scalar x) {
  const std::size_t K = members.size();
  if (K == 0) throw std::invalid_argument("crps_ensemble: empty ensemble");
  std::vector<Scalar> f(members.begin(), members.end());
  std::sort(f.begin(), f.end());
  Scalar abs_err = 0;
  Scalar spread = 0;
  for (std::size_t i = 0; i < K; ++i) {
    abs_err += std::abs(f[i] - x);
    spread += Scalar(2 * static_cast<std::int64_t>(i) + 1 - static_cast<std::int64_t>(K)) * f[i];
  }
  const Scalar k = static_cast<Scalar>(K);
  return abs_err / k - Scalar(2) * spread / (Scalar(2) * k * k);
}

/// Ensemble CRPS of the empirical CDF,
///   (1/K) sum_k |f_k - x| - 1/(2K^2) sum_k sum_l |f_k - f_l|.
/// This is not the "fair" K(K-1) variant.
template <typename Scalar>
Scalar crps_ensemble(std::span<const Scalar> members, Scalar x) {
  const std::size_t K = members.size();
  if (K == 0) throw std::invalid_argument("crps_ensemble: empty ensemble");
  if (K > kDirectCrpsMaxMembers) return crps_ensemble_sorted(members, x);
  Scalar abs_err = 0;
  for (std::size_t k = 0; k < K; ++k) abs_err += std::abs(members[k] - x);
  Scalar spread = 0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < K; ++l) spread += std::abs(members[k] - members[l]);
  const Scalar kk = static_cast<Scalar>(K);
  return abs_err / kk - spread / (Scalar(2) * kk * kk);
}

/// Positively oriented skill, 1 - mean_f / mean_ref.
double crpss(double mean_crps_forecast, double mean_crps_reference);

/// Rank of x within {members, x}, in 1..K+1. Ties are placed uniformly at
/// random among the tied positions.
int verification_rank(std::span<const double> members, double x, Rng& tie_rng);

struct RankHistogram {
  std::vector<std::int64_t> counts;  // counts[r-1] for rank r
  std::int64_t total = 0;

  std::size_t bins() const { return counts.size(); }
  std::vector<double> relative_frequencies() const;
};

RankHistogram rank_histogram(std::span<const int> ranks, int members);

/// Equal-width bins on [0,1]; 1.0 lands in the last bin.
RankHistogram pit_histogram(std::span<const double> pit_values, int bins);

/// Sum over bins of |rho_r - 1/B|. Zero for a flat histogram.
double reliability_index(const RankHistogram& hist);

struct Interval {
  double lower = 0;
  double upper = 0;

  double width() const { return upper - lower; }
  // Endpoints count as covered.
  bool covers(double x) const { return x >= lower && x <= upper; }
};

Interval ensemble_range(std::span<const double> members);
Interval central_interval(const cn0::ParamsD& params, double alpha);

/// Nominal coverage of a K-member range, (K-1)/(K+1).
inline double nominal_range_coverage(int members) {
  return static_cast<double>(members - 1) / static_cast<double>(members + 1);
}

struct CoverageWidth {
  double coverage_pct = 0;
  double mean_width = 0;
  std::size_t n = 0;
};

CoverageWidth coverage_and_width(std::span<const Interval> intervals, std::span<const double> obs);

/// Order-statistic median; even K averages the two central values.
double ensemble_median(std::span<const double> members);

double mean_absolute_error(std::span<const double> point, std::span<const double> obs);

// Stationary bootstrap.

struct BootstrapOptions {
  double level = 0.95;
  int replicates = 2000;
  double block_constant = 1.0;  // mean block length = ceil(c * N^(1/3))
};

struct BootstrapCI {
  double point = 0;
  double lower = 0;
  double upper = 0;
  double level = 0.95;
  int replicates = 0;
  double mean_block_length = 0;
};

inline constexpr std::size_t kMinBootstrapLength = 10;

double mean_block_length(std::size_t n, double block_constant = 1.0);

/// One stationary-bootstrap resample of {0..n-1}: geometric block lengths
/// with the given mean, circular wraparound.
std::vector<std::size_t> stationary_bootstrap_indices(std::size_t n, double mean_block, Rng& rng);

/// Percentile interval of the mean of `series`.
BootstrapCI stationary_bootstrap_ci(std::span<const double> series, const BootstrapOptions& opts,
                                    Rng& rng);

/// Percentile interval of 1 - mean(f)/mean(ref), resampling both series with
/// shared indices.
BootstrapCI bootstrap_crpss_ci(std::span<const double> forecast, std::span<const double> reference,
                               const BootstrapOptions& opts, Rng& rng);

/// Linear-interpolation (type 7) empirical quantile of sorted data.
double sorted_quantile(std::span<const double> sorted, double level);

}  // namespace solarcal::scoring
