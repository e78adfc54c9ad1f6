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

#include "solarcal/scoring.hpp"

#include <numeric>
#include <string>

#include "solarcal/error.hpp"

namespace solarcal::scoring {

double crpss(double mean_crps_forecast, double mean_crps_reference) {
  if (!(mean_crps_reference > 0))
    throw NumericalError("crpss: reference mean CRPS must be positive (skill undefined)");
  return 1.0 - mean_crps_forecast / mean_crps_reference;
}

int verification_rank(std::span<const double> members, double x, Rng& tie_rng) {
  int below = 0;
  int ties = 0;
  for (double f : members) {
    if (f < x)
      ++below;
    else if (f == x)
      ++ties;
  }
  if (ties == 0) return below + 1;
  std::uniform_int_distribution<int> slot(0, ties);
  return below + 1 + slot(tie_rng);
}

std::vector<double> RankHistogram::relative_frequencies() const {
  std::vector<double> rho(counts.size(), 0.0);
  if (total == 0) return rho;
  for (std::size_t i = 0; i < counts.size(); ++i)
    rho[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return rho;
}

RankHistogram rank_histogram(std::span<const int> ranks, int members) {
  RankHistogram h;
  h.counts.assign(static_cast<std::size_t>(members + 1), 0);
  for (int r : ranks) {
    if (r < 1 || r > members + 1)
      throw std::out_of_range("rank_histogram: rank " + std::to_string(r) + " outside 1.." +
                              std::to_string(members + 1));
    ++h.counts[static_cast<std::size_t>(r - 1)];
    ++h.total;
  }
  return h;
}

RankHistogram pit_histogram(std::span<const double> pit_values, int bins) {
  if (bins < 1) throw std::invalid_argument("pit_histogram: need at least one bin");
  RankHistogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : pit_values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("pit_histogram: PIT value outside [0,1]");
    auto b = static_cast<std::size_t>(v * bins);
    if (b >= h.counts.size()) b = h.counts.size() - 1;
    ++h.counts[b];
    ++h.total;
  }
  return h;
}

double reliability_index(const RankHistogram& hist) {
  if (hist.total <= 0) throw std::invalid_argument("reliability_index: empty histogram");
  const double uniform = 1.0 / static_cast<double>(hist.bins());
  double ri = 0;
  for (double rho : hist.relative_frequencies()) ri += std::abs(rho - uniform);
  return ri;
}

Interval ensemble_range(std::span<const double> members) {
  if (members.empty()) throw std::invalid_argument("ensemble_range: empty ensemble");
  const auto [lo, hi] = std::minmax_element(members.begin(), members.end());
  return {*lo, *hi};
}

Interval central_interval(const cn0::ParamsD& params, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("central_interval: alpha in (0,1)");
  return {cn0::quantile(params, alpha / 2), cn0::quantile(params, 1 - alpha / 2)};
}

CoverageWidth coverage_and_width(std::span<const Interval> intervals, std::span<const double> obs) {
  if (intervals.size() != obs.size())
    throw std::invalid_argument("coverage_and_width: size mismatch");
  CoverageWidth out;
  out.n = obs.size();
  if (out.n == 0) return out;
  std::size_t covered = 0;
  double width = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    covered += intervals[i].covers(obs[i]) ? 1 : 0;
    width += intervals[i].width();
  }
  out.coverage_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(out.n);
  out.mean_width = width / static_cast<double>(out.n);
  return out;
}

double ensemble_median(std::span<const double> members) {
  if (members.empty()) throw std::invalid_argument("ensemble_median: empty ensemble");
  std::vector<double> f(members.begin(), members.end());
  std::sort(f.begin(), f.end());
  const std::size_t n = f.size();
  return n % 2 == 1 ? f[n / 2] : 0.5 * (f[n / 2 - 1] + f[n / 2]);
}

double mean_absolute_error(std::span<const double> point, std::span<const double> obs) {
  if (point.size() != obs.size()) throw std::invalid_argument("mean_absolute_error: size mismatch");
  if (obs.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) s += std::abs(point[i] - obs[i]);
  return s / static_cast<double>(obs.size());
}

double sorted_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty sample");
  const double h = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_block_length(std::size_t n, double block_constant) {
  // Smallest integer L with L^3 >= c^3 n; cbrt alone can overshoot exact cubes.
  const double target = block_constant * block_constant * block_constant * static_cast<double>(n);
  double L = std::ceil(block_constant * std::cbrt(static_cast<double>(n)));
  while (L > 1 && (L - 1) * (L - 1) * (L - 1) >= target) L -= 1;
  while (L * L * L < target) L += 1;
  return std::max(1.0, L);
}

std::vector<std::size_t> stationary_bootstrap_indices(std::size_t n, double mean_block, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::uniform_int_distribution<std::size_t> start(0, n - 1);
  const double p_new = 1.0 / std::max(1.0, mean_block);
  std::size_t cur = start(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) cur = uniform01(rng) < p_new ? start(rng) : (cur + 1) % n;
    idx[i] = cur;
  }
  return idx;
}

namespace {

void check_length(std::size_t n) {
  if (n < kMinBootstrapLength)
    throw std::invalid_argument("stationary bootstrap: series length " + std::to_string(n) +
                                " below minimum " + std::to_string(kMinBootstrapLength));
}

BootstrapCI finish(std::vector<double>& reps, double point, const BootstrapOptions& opts,
                   double block) {
  std::sort(reps.begin(), reps.end());
  BootstrapCI ci;
  ci.point = point;
  ci.level = opts.level;
  ci.replicates = opts.replicates;
  ci.mean_block_length = block;
  const double tail = 0.5 * (1.0 - opts.level);
  ci.lower = std::min(point, sorted_quantile(reps, tail));
  ci.upper = std::max(point, sorted_quantile(reps, 1.0 - tail));
  return ci;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

BootstrapCI stationary_bootstrap_ci(std::span<const double> series, const BootstrapOptions& opts,
                                    Rng& rng) {
  const std::size_t n = series.size();
  check_length(n);
  const double block = mean_block_length(n, opts.block_constant);
  std::vector<double> reps(static_cast<std::size_t>(opts.replicates));
  for (auto& r : reps) {
    double s = 0;
    for (std::size_t i : stationary_bootstrap_indices(n, block, rng)) s += series[i];
    r = s / static_cast<double>(n);
  }
  return finish(reps, mean_of(series), opts, block);
}

BootstrapCI bootstrap_crpss_ci(std::span<const double> forecast, std::span<const double> reference,
                               const BootstrapOptions& opts, Rng& rng) {
  if (forecast.size() != reference.size())
    throw std::invalid_argument("bootstrap_crpss_ci: size mismatch");
  const std::size_t n = forecast.size();
  check_length(n);
  const double block = mean_block_length(n, opts.block_constant);
  std::vector<double> reps;
  reps.reserve(static_cast<std::size_t>(opts.replicates));
  for (int b = 0; b < opts.replicates; ++b) {
    double sf = 0, sr = 0;
    for (std::size_t i : stationary_bootstrap_indices(n, block, rng)) {
      sf += forecast[i];
      sr += reference[i];
    }
    reps.push_back(sr > 0 ? 1.0 - sf / sr : 0.0);
  }
  return finish(reps, crpss(mean_of(forecast), mean_of(reference)), opts, block);
}

}  // namespace solarcal::scoring
