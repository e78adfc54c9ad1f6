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

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "solarcal/cn0.hpp"
#include "solarcal/normal.hpp"

using namespace solarcal;

TEST(Normal, CdfMatchesReference) {
  for (double z = -30; z <= 30; z += 0.37) EXPECT_NEAR(normal::cdf(z), oracle::std_normal_cdf(z), 1e-15);
}

TEST(Normal, QuantileMatchesReference) {
  for (double p : {1e-300, 1e-12, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1 - 1e-10}) {
    const double ref = oracle::std_normal_quantile(p);
    EXPECT_NEAR(normal::quantile(p), ref, 1e-13 * std::max(1.0, std::abs(ref))) << p;
  }
}

TEST(Cn0, CdfExamples) {
  EXPECT_EQ(cn0::cdf(cn0::ParamsD{0, 1}, -5.0), 0.0);
  EXPECT_DOUBLE_EQ(cn0::cdf(cn0::ParamsD{0, 1}, 0.0), 0.5);
  EXPECT_NEAR(cn0::cdf(cn0::ParamsD{200, 100}, 300.0), 0.841344746068543, 1e-14);
}

TEST(Cn0, CdfIsRightContinuousWithAtomAtZero) {
  const cn0::ParamsD p{50, 80};
  EXPECT_EQ(cn0::cdf(p, -1e-12), 0.0);
  EXPECT_DOUBLE_EQ(cn0::cdf(p, 0.0), cn0::point_mass(p));
  EXPECT_NEAR(cn0::point_mass(p), oracle::std_normal_cdf(-50.0 / 80.0), 1e-15);
}

TEST(Cn0, MeanKappa) {
  EXPECT_NEAR(cn0::mean_kappa(cn0::ParamsD{0, 1}), 0.398942280401433, 1e-14);
  EXPECT_NEAR(cn0::mean_kappa(cn0::ParamsD{1000, 1}), 1000.0, 1e-9);
  EXPECT_NEAR(cn0::mean_kappa(cn0::ParamsD{-1000, 1}), 0.0, 1e-12);
}

TEST(Cn0, MeanKappaMatchesMonteCarlo) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  const cn0::ParamsD p{40, 100};
  double s = 0;
  const int N = 400000;
  for (int i = 0; i < N; ++i) s += std::max(0.0, p.mu + p.sigma * n(rng));
  EXPECT_NEAR(cn0::mean_kappa(p), s / N, 0.5);  // ~4 standard errors
}

TEST(Cn0, QuantileExamples) {
  EXPECT_EQ(cn0::quantile(cn0::ParamsD{-1, 1}, 0.5), 0.0);
  EXPECT_NEAR(cn0::quantile(cn0::ParamsD{0, 1}, 8.0 / 9.0), oracle::std_normal_quantile(8.0 / 9.0), 1e-13);
  EXPECT_NEAR(cn0::quantile(cn0::ParamsD{0, 1}, 8.0 / 9.0), 1.22064034884735, 1e-12);
  EXPECT_DOUBLE_EQ(cn0::quantile(cn0::ParamsD{500, 100}, 0.5), 500.0);
  EXPECT_THROW(cn0::quantile(cn0::ParamsD{0, 1}, 0.0), std::domain_error);
  EXPECT_THROW(cn0::quantile(cn0::ParamsD{0, 1}, 1.0), std::domain_error);
}

TEST(Cn0, QuantileIsNonDecreasing) {
  const cn0::ParamsD p{30, 70};
  double prev = 0;
  for (int i = 1; i < 1000; ++i) {
    const double q = cn0::quantile(p, i / 1000.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(Cn0, QuantileEnsemble) {
  const auto zeros = cn0::quantile_ensemble(cn0::ParamsD{-10, 0.1});
  for (int k = 0; k < 8; ++k) EXPECT_EQ(zeros[k], 0.0);
  const auto m = cn0::quantile_ensemble(cn0::ParamsD{0, 1});
  for (int k = 0; k < 4; ++k) EXPECT_EQ(m[k], 0.0);
  EXPECT_NEAR(m[4], 0.139710298881862, 1e-13);
  for (int k = 0; k < 8; ++k)
    EXPECT_NEAR(m[k], std::max(0.0, oracle::std_normal_quantile((k + 1) / 9.0)), 1e-13);
  EXPECT_TRUE(std::is_sorted(m.begin(), m.end()));
}

TEST(Cn0, CrpsExamples) {
  // 50 * (2 phi(0) - 1/sqrt(pi)), evaluated at 30 digits.
  EXPECT_NEAR(cn0::crps(cn0::ParamsD{500, 50}, 500.0), 11.6847488627554534, 1e-11);
  EXPECT_NEAR(cn0::crps(cn0::ParamsD{-40, 1e-6}, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(cn0::crps(cn0::ParamsD{0, 1}, 2.0), oracle::crps_quadrature(0, 1, 2), 1e-12);
  EXPECT_NEAR(cn0::crps(cn0::ParamsD{0, 1}, 2.0), 1.33594433305834845, 1e-12);
}

TEST(Cn0, CrpsAgreesWithQuadratureOnRandomTriples) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mu(-300, 1200), ls(0, 6), u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double m = mu(rng), s = std::exp(ls(rng)) * 0.5;
    const double x = u(rng) < 0.2 ? 0.0 : std::max(0.0, m + s * 3 * (2 * u(rng) - 1));
    const double ref = oracle::crps_quadrature(m, s, x);
    EXPECT_NEAR(cn0::crps(cn0::ParamsD{m, s}, x), ref, 1e-8 + 1e-8 * std::abs(ref)) << m << " " << s << " " << x;
  }
}

TEST(Cn0, CrpsIsNonNegativeAndZeroOnlyForPointMass) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mu(-100, 100), s(0.1, 50), x(0, 200);
  for (int i = 0; i < 1000; ++i) EXPECT_GT(cn0::crps(cn0::ParamsD{mu(rng), s(rng)}, x(rng)), 0.0);
}

TEST(Cn0, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> mu(-200, 800), s(1, 300), x(0, 900);
  for (int i = 0; i < 300; ++i) {
    const cn0::ParamsD p{mu(rng), s(rng)};
    const double obs = x(rng);
    const auto g = cn0::crps_grad(p, obs);
    const double dmu =
        oracle::central_difference([&](double v) { return cn0::crps(cn0::ParamsD{v, p.sigma}, obs); }, p.mu);
    const double dsigma =
        oracle::central_difference([&](double v) { return cn0::crps(cn0::ParamsD{p.mu, v}, obs); }, p.sigma);
    EXPECT_TRUE(oracle::gradients_agree(g.d_mu, dmu)) << g.d_mu << " vs " << dmu;
    EXPECT_TRUE(oracle::gradients_agree(g.d_sigma, dsigma)) << g.d_sigma << " vs " << dsigma;
  }
}

TEST(Cn0, GradientExamples) {
  EXPECT_NEAR(cn0::crps_grad(cn0::ParamsD{500, 50}, 500.0).d_mu, 0.0, 1e-15);
  for (double s : {1e3, 1e4, 1e5}) EXPECT_GT(cn0::crps_grad(cn0::ParamsD{500, s}, 500.0).d_sigma, 0.0);
}

TEST(Cn0, Pit) {
  EXPECT_DOUBLE_EQ(cn0::pit(cn0::ParamsD{300, 100}, 300.0, 0.9), 0.5);
  EXPECT_DOUBLE_EQ(cn0::pit(cn0::ParamsD{0, 1}, 0.0, 0.5), 0.25);
  EXPECT_EQ(cn0::pit(cn0::ParamsD{0, 1}, 0.0, 0.0), 0.0);
  EXPECT_THROW(cn0::pit(cn0::ParamsD{0, 1}, -1.0, 0.5), DataError);
}

TEST(Cn0, PitIsUniformUnderTheLaw) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  const cn0::ParamsD p{20, 60};  // about 37% mass at zero
  std::array<int, 10> bins{};
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    const double y = std::max(0.0, p.mu + p.sigma * n(rng));
    const double v = cn0::pit(p, y, u(rng));
    ++bins[std::min(9, static_cast<int>(v * 10))];
  }
  for (int b : bins) EXPECT_NEAR(b / static_cast<double>(N), 0.1, 0.006);
}

TEST(Cn0, FloatInstantiationTracksDouble) {
  const cn0::Params<float> pf{120.f, 45.f};
  const cn0::ParamsD pd{120, 45};
  EXPECT_NEAR(cn0::crps(pf, 80.f), cn0::crps(pd, 80.0), 1e-3);
}
