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

#include "fixtures.hpp"
#include "oracles.hpp"
#include "solarcal/nnet.hpp"

using namespace solarcal;
using namespace solarcal::nnet;

namespace {

// Features with a constant last-but-one row (altitude) and a signal in row 0.
struct ToyData {
  Eigen::MatrixXd x;
  std::vector<double> y;
};

ToyData toy_data(int n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(0, 1);
  ToyData d{Eigen::MatrixXd(kInputDim, n), {}};
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < kInputDim; ++i) d.x(i, j) = u(rng);
    d.x(5, j) = 1200.0;
    d.y.push_back(std::max(0.0, 200.0 + 500.0 * d.x(0, j) + sigma * z(rng)));
  }
  return d;
}

MlpConfig small_config(Head head) {
  MlpConfig c;
  c.hidden = {16};
  c.head = head;
  c.batch_size = 64;
  c.max_epochs = 60;
  c.patience = 5;
  c.learning_rate = 0.01;
  return c;
}

}  // namespace

TEST(Mlp, ParameterCounts) {
  MlpConfig drn;
  EXPECT_EQ(param_count(drn), 67832u);
  MlpConfig members;
  members.head = Head::Members;
  EXPECT_EQ(param_count(members), 69368u);
  MlpConfig tiny;
  tiny.input_dim = 1;
  tiny.hidden = {1};
  tiny.head = Head::Members;
  tiny.members = 1;
  EXPECT_EQ(param_count(tiny), 4u);
  Rng rng(1);
  EXPECT_EQ(Mlp<double>::he_uniform(drn.layer_sizes(), rng).parameter_count(), 67832u);
}

TEST(Mlp, ForwardHandExample) {
  auto net = Mlp<double>::zeros({1, 2, 1});
  net.weights[0] << 1, -1;
  net.biases[0] << 0, 0.5;
  net.weights[1] << 2, 3;
  net.biases[1] << 1;
  Eigen::MatrixXd x(1, 2);
  x << 2, -1;
  const auto out = forward(net, x);
  EXPECT_DOUBLE_EQ(out(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 5.5);
  net.biases[1] << std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(net, x), NumericalError);
}

TEST(Mlp, HeUniformBounds) {
  Rng rng(3);
  const auto net = Mlp<double>::he_uniform({7, 255, 2}, rng);
  EXPECT_LE(net.weights[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 7.0));
  EXPECT_LE(net.weights[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 255.0));
  EXPECT_EQ(net.biases[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Heads, Examples) {
  const auto p = drn_head(0.5, 2.0, 10.0);
  EXPECT_DOUBLE_EQ(p.mu, 5.0);
  EXPECT_DOUBLE_EQ(p.sigma, 10.0 * (4.0 + kSigmaEpsilon));
  EXPECT_GT(drn_head(1.0, 0.0).sigma, 0.0);
  Eigen::Vector2d raw(-1.0, 0.3);
  EXPECT_EQ(members_head<double>(raw, 2.0), (std::vector<double>{0.0, 0.6}));
}

TEST(Losses, Examples) {
  const std::vector<double> m{0.0, 1.0};
  EXPECT_EQ(loss_members<double>(m, 1.0), 0.25);
  const std::vector<double> clamped{-3.0, 1.0};
  EXPECT_EQ(loss_members<double>(clamped, 1.0), 0.25);
  EXPECT_NEAR(loss_drn(cn0::ParamsD{500, 50}, 500.0), 11.6847488627554534, 1e-11);
}

TEST(Backward, MatchesFiniteDifferencesBothHeads) {
  std::mt19937_64 rng(12);
  for (Head head : {Head::Distribution, Head::Members}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = fixture::gradient_point(head, 3, rng);
      const auto lg = backward<double>(p.net, head, p.x, p.y);
      EXPECT_NEAR(lg.loss, oracle::net_loss(p.net, head, p.x, p.y), 1e-13);
      const auto check = oracle::check_net_gradient(p.net, head, p.x, p.y, lg.gradient);
      EXPECT_EQ(check.failed, 0u) << to_string(head) << " worst " << check.worst_relative;
      EXPECT_GT(check.checked, 80u);
    }
  }
}

TEST(Backward, ZeroLossGivesZeroGradient) {
  auto net = Mlp<double>::zeros({kInputDim, 8, kMembers});
  net.biases[1].setConstant(0.4);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(kInputDim, 2);
  const std::vector<double> y{0.4, 0.4};
  const auto lg = backward<double>(net, Head::Members, x, y);
  EXPECT_EQ(lg.loss, 0.0);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(lg.gradient.weights[l].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(lg.gradient.biases[l].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Backward, BatchGradientIsMeanOfCaseGradients) {
  std::mt19937_64 rng(4);
  for (Head head : {Head::Distribution, Head::Members}) {
    const auto p = fixture::gradient_point(head, 2, rng);
    const auto both = backward<double>(p.net, head, p.x, p.y);
    const auto a = backward<double>(p.net, head, p.x.col(0), std::span(p.y).first(1));
    const auto b = backward<double>(p.net, head, p.x.col(1), std::span(p.y).last(1));
    for (std::size_t l = 0; l < 2; ++l)
      EXPECT_LT((both.gradient.weights[l] - 0.5 * (a.gradient.weights[l] + b.gradient.weights[l])).cwiseAbs().maxCoeff(),
                1e-14);
    EXPECT_NEAR(both.loss, 0.5 * (a.loss + b.loss), 1e-15);
  }
}

TEST(Backward, FloatTracksDouble) {
  std::mt19937_64 rng(6);
  const auto p = fixture::gradient_point(Head::Distribution, 4, rng);
  Mlp<float> nf;
  for (std::size_t l = 0; l < 2; ++l) {
    nf.weights.push_back(p.net.weights[l].cast<float>());
    nf.biases.push_back(p.net.biases[l].cast<float>());
  }
  std::vector<float> yf(p.y.begin(), p.y.end());
  const auto gd = backward<double>(p.net, Head::Distribution, p.x, p.y);
  const auto gf = backward<float>(nf, Head::Distribution, p.x.cast<float>(), yf);
  EXPECT_NEAR(gf.loss, gd.loss, 1e-5);
  EXPECT_LT((gf.gradient.weights[0].cast<double>() - gd.gradient.weights[0]).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Train, DeterministicForAFixedSeed) {
  const auto d = toy_data(300, 40, 1);
  Rng a(7), b(7);
  const auto r1 = train<double>(small_config(Head::Distribution), d.x, d.y, a);
  const auto r2 = train<double>(small_config(Head::Distribution), d.x, d.y, b);
  EXPECT_EQ(r1.best_epoch, r2.best_epoch);
  EXPECT_EQ(r1.validation_loss, r2.validation_loss);
  for (std::size_t l = 0; l < r1.model.net.layers(); ++l) EXPECT_EQ(r1.model.net.weights[l], r2.model.net.weights[l]);
}

TEST(Train, ReducesValidationLossBothHeads) {
  const auto d = toy_data(400, 40, 2);
  for (Head head : {Head::Distribution, Head::Members}) {
    Rng rng(3);
    const auto r = train<double>(small_config(head), d.x, d.y, rng);
    ASSERT_GT(r.best_epoch, 0);
    EXPECT_LT(r.validation_loss[static_cast<std::size_t>(r.best_epoch)], 0.5 * r.validation_loss.front());
    EXPECT_EQ(r.validation_loss.size(), static_cast<std::size_t>(r.epochs_run + 1));
  }
}

TEST(Train, EarlyStoppingPatience) {
  const auto d = toy_data(200, 40, 3);
  for (int patience : {0, 1, 3}) {
    auto c = small_config(Head::Distribution);
    c.patience = patience;
    c.max_epochs = 200;
    c.learning_rate = 0.05;
    Rng rng(1);
    const auto r = train<double>(c, d.x, d.y, rng);
    if (r.epochs_run < c.max_epochs) {
      EXPECT_EQ(r.epochs_run - r.best_epoch, std::max(1, patience));
    }
    const auto best = r.validation_loss[static_cast<std::size_t>(r.best_epoch)];
    for (double v : r.validation_loss) EXPECT_GE(v, best);
  }
}

TEST(Train, RejectsBadInputs) {
  const auto d = toy_data(10, 40, 3);
  Rng rng(1);
  auto c = small_config(Head::Distribution);
  EXPECT_THROW(train<double>(c, Eigen::MatrixXd(kInputDim, 0), {}, rng), DataError);
  c.validation_fraction = 1.0;
  EXPECT_THROW(train<double>(c, d.x, d.y, rng), ConfigError);
}

TEST(Train, DistributionHeadRecoversScale) {
  const auto d = toy_data(3000, 80, 4);
  auto c = small_config(Head::Distribution);
  c.max_epochs = 150;
  c.patience = 10;
  std::vector<cn0::ParamsD> runs;
  Eigen::MatrixXd probe(kInputDim, 1);
  probe << 0.5, 0.5, 0.5, 0.5, 0.5, 1200.0, 0.5;
  for (int r = 0; r < 3; ++r) {
    Rng rng(substream_seed(1, "test.drn", {r}));
    runs.push_back(train<double>(c, d.x, d.y, rng).model.predict_distribution(probe).front());
  }
  const auto agg = aggregate_distribution(runs);
  EXPECT_NEAR(agg.mu, 450.0, 25.0);
  EXPECT_NEAR(agg.sigma, 80.0, 12.0);
}

TEST(Aggregate, Examples) {
  const std::vector<std::vector<double>> m{{1, 3}, {2, 0}};
  EXPECT_EQ(aggregate_members(m), (std::vector<double>{0.5, 2.5}));
  const std::vector<cn0::ParamsD> p{{10, 2}, {20, 4}};
  const auto a = aggregate_distribution(p);
  EXPECT_DOUBLE_EQ(a.mu, 15.0);
  EXPECT_DOUBLE_EQ(a.sigma, 3.0);
  EXPECT_THROW(aggregate_members(std::vector<std::vector<double>>{}), std::invalid_argument);
  EXPECT_THROW(aggregate_members(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST(PermutationImportance, SignalFeatureMattersConstantDoesNot) {
  const auto d = toy_data(600, 30, 5);
  Rng rng(2);
  const auto model = train<double>(small_config(Head::Distribution), d.x, d.y, rng).model;
  Rng p(9);
  EXPECT_GT(permutation_importance(model, d.x, d.y, 0, p), 20.0);
  EXPECT_EQ(permutation_importance(model, d.x, d.y, 5, p), 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto d = toy_data(200, 40, 6);
  auto c = small_config(Head::Members);
  c.max_epochs = 5;
  Rng r1(1), r2(1);
  const auto md = train<double>(c, d.x, d.y, r1).model;
  const auto mf = train<float>(c, d.x, d.y, r2).model;
  const auto bd = deserialize<double>(serialize(md));
  const auto bf = deserialize<float>(serialize(mf));
  EXPECT_EQ(bd.predict_members(d.x), md.predict_members(d.x));
  EXPECT_EQ(bf.predict_members(d.x), mf.predict_members(d.x));
  EXPECT_EQ(bd.standardizer.mean, md.standardizer.mean);
  EXPECT_EQ(bd.config.hidden, md.config.hidden);
  EXPECT_THROW(deserialize<float>(serialize(md)), DataError);
  EXPECT_THROW(deserialize<double>("{\"format\":\"other\"}"), DataError);
  EXPECT_THROW(deserialize<double>("not json"), DataError);
}

TEST(Features, FixedOrder) {
  PairedCase c;
  c.lead_h = 13;
  c.stats = EnsembleStats{300, 400, 0.125};
  Station s;
  s.latitude = -27;
  s.longitude = -70.5;
  s.altitude = 1200;
  const auto r = feature_row(c, s);
  EXPECT_EQ(r, (Eigen::Matrix<double, kInputDim, 1>() << 300, 400, 0.125, -27, -70.5, 1200, 13).finished());
}
