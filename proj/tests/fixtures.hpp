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

// Synthetic training sets with known generating laws.

#pragma once

#include <random>
#include <vector>

#include "solarcal/data_model.hpp"
#include "solarcal/emos.hpp"
#include "solarcal/nnet.hpp"
#include "oracles.hpp"

namespace solarcal::fixture {

/// Cases whose observations are drawn from the censored normal implied by
/// `truth` through the EMOS links. Ensemble mean, sd and p0 are drawn
/// directly; members are not populated.
inline std::vector<PairedCase> emos_cases(std::size_t n, const emos::Coefficients& truth, std::uint64_t seed,
                                          int station_id = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(0, 900), sd(5, 120), u(0, 1);
  std::normal_distribution<double> z(0, 1);
  std::vector<PairedCase> out;
  const TimePoint t0 = midnight(Date(std::chrono::year{2021} / 1 / 1));
  for (std::size_t i = 0; i < n; ++i) {
    PairedCase c;
    c.station_id = station_id;
    c.init_time = t0 + std::chrono::days(static_cast<int>(i / 48));
    c.lead_h = static_cast<int>(i % 48) + 1;
    const bool some_zero = u(rng) < 0.25;
    c.stats.mean = some_zero ? 0.3 * mean(rng) : mean(rng);
    const double s = sd(rng);
    c.stats.variance = s * s;
    c.stats.p0 = some_zero ? std::floor(u(rng) * 8.0) / 8.0 : 0.0;
    const auto law = emos::predict(truth, c.stats);
    c.obs = std::max(0.0, law.mu + law.sigma * z(rng));
    out.push_back(c);
  }
  return out;
}

/// A small network with one batch, drawn until every case sits at least
/// `margin` away from the kinks of the loss.
struct GradientPoint {
  nnet::Mlp<double> net;
  Eigen::MatrixXd x;
  std::vector<double> y;
};

inline GradientPoint gradient_point(nnet::Head head, int batch, std::mt19937_64& rng, double margin = 1e-3) {
  const std::vector<int> sizes{nnet::kInputDim, 8, head == nnet::Head::Distribution ? 2 : kMembers};
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  for (;;) {
    GradientPoint p;
    Rng init(rng());
    p.net = nnet::Mlp<double>::he_uniform(sizes, init);
    for (auto& b : p.net.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * n(rng);
    p.x = Eigen::MatrixXd(nnet::kInputDim, batch);
    for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = n(rng);
    for (int j = 0; j < batch; ++j) p.y.push_back(u(rng) < 0.1 ? 0.0 : 2.0 * u(rng));
    if (oracle::net_kink_distance(p.net, head, p.x, p.y) > margin) return p;
  }
}

}  // namespace solarcal::fixture
