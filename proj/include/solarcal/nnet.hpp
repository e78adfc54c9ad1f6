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

// Fully connected ReLU network with two output heads:
//
//  * Head::Distribution emits (mu, sqrt-sigma) of a zero-censored normal and
//    is trained on the closed-form CRPS (distributional regression network).
//  * Head::Members emits K ensemble members, clamped at zero, and is trained
//    on the ensemble CRPS (corrected ensemble).
//
// Cases are stored column-wise: an input batch is input_dim x B. Targets are
// divided by `target_scale` during training and outputs are rescaled to
// W/m^2 on prediction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "solarcal/cn0.hpp"
#include "solarcal/data_model.hpp"
#include "solarcal/error.hpp"
#include "solarcal/rng.hpp"
#include "solarcal/scoring.hpp"

namespace solarcal::nnet {

enum class Head { Distribution, Members };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

inline constexpr int kInputDim = 7;
/// Added to the squared scale output so sigma stays positive.
inline constexpr double kSigmaEpsilon = 1e-6;

struct MlpConfig {
  int input_dim = kInputDim;
  std::vector<int> hidden{255, 255};
  Head head = Head::Distribution;
  int members = kMembers;  // outputs of the members head
  int batch_size = 1200;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_epochs = 500;
  double validation_fraction = 0.2;
  int patience = 10;
  int runs = 10;
  std::uint64_t seed = 0;
  double target_scale = 1000.0;

  int outputs() const { return head == Head::Distribution ? 2 : members; }
  std::vector<int> layer_sizes() const;
  void validate() const;
};

/// Number of weights and biases.
std::size_t param_count(const MlpConfig& config);

template <typename Scalar>
struct Mlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;  // weights[l] is out_l x in_l
  std::vector<Vector> biases;

  static Mlp zeros(const std::vector<int>& sizes) {
    Mlp m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      m.weights.push_back(Matrix::Zero(sizes[l + 1], sizes[l]));
      m.biases.push_back(Vector::Zero(sizes[l + 1]));
    }
    return m;
  }

  /// Uniform in +-sqrt(6 / fan_in), zero biases.
  static Mlp he_uniform(const std::vector<int>& sizes, Rng& rng) {
    Mlp m = zeros(sizes);
    for (auto& w : m.weights) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(u(rng));
    }
    return m;
  }

  std::size_t layers() const { return weights.size(); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }

  /// Widths input..output; empty when the layer chain is inconsistent.
  std::vector<int> layer_sizes() const {
    if (weights.empty() || weights.size() != biases.size()) return {};
    std::vector<int> sizes{static_cast<int>(weights.front().cols())};
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].cols() != sizes.back() || biases[l].size() != weights[l].rows()) return {};
      sizes.push_back(static_cast<int>(weights[l].rows()));
    }
    return sizes;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  /// Raw (pre-head) outputs; affine and ReLU alternate, the last layer is affine.
  Matrix forward(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix z = (weights[l] * a).colwise() + biases[l];
      if (l + 1 < weights.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  // Elementwise helpers so the same type doubles as gradient and Adam state.
  Mlp& set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
    return *this;
  }
  Mlp& operator*=(Scalar c) {
    for (auto& w : weights) w *= c;
    for (auto& b : biases) b *= c;
    return *this;
  }
  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }
};

/// Forward pass that rejects non-finite outputs.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x) {
  auto out = net.forward(x);
  if (!out.allFinite()) throw NumericalError("nnet::forward: non-finite network output");
  return out;
}

// Heads and losses, in whichever units the caller works in (`scale`
// converts raw outputs to those units).

template <typename Scalar>
cn0::Params<Scalar> drn_head(Scalar raw_mu, Scalar raw_scale, Scalar scale = Scalar(1)) {
  return {scale * raw_mu, scale * (raw_scale * raw_scale + Scalar(kSigmaEpsilon))};
}

template <typename Scalar>
Scalar clamp_member(Scalar raw) {
  return std::max(Scalar(0), raw);
}

template <typename Scalar, typename Derived>
std::vector<Scalar> members_head(const Eigen::MatrixBase<Derived>& raw, Scalar scale = Scalar(1)) {
  std::vector<Scalar> out(static_cast<std::size_t>(raw.size()));
  for (Eigen::Index k = 0; k < raw.size(); ++k) out[static_cast<std::size_t>(k)] = scale * clamp_member(Scalar(raw[k]));
  return out;
}

template <typename Scalar>
Scalar loss_drn(const cn0::Params<Scalar>& params, Scalar obs) {
  return cn0::crps(params, obs);
}

/// Ensemble CRPS of the clamped members.
template <typename Scalar>
Scalar loss_members(std::span<const Scalar> members, Scalar obs) {
  std::vector<Scalar> m(members.begin(), members.end());
  for (auto& v : m) v = clamp_member(v);
  return scoring::crps_ensemble<Scalar>(m, obs);
}

/// Mean loss over the batch and its exact gradient. Subgradients are zero at
/// ReLU kinks, at the clamp boundary and at the |.| kinks of the ensemble CRPS.
template <typename Scalar>
struct LossAndGradient {
  Scalar loss = 0;
  Mlp<Scalar> gradient;
};

template <typename Scalar>
LossAndGradient<Scalar> backward(const Mlp<Scalar>& net, Head head, const typename Mlp<Scalar>::Matrix& x,
                                 std::span<const Scalar> targets) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Eigen::Index batch = x.cols();
  if (batch == 0) throw std::invalid_argument("nnet::backward: empty batch");
  const std::size_t L = net.layers();

  std::vector<Matrix> act;  // act[0] = input, act[l] = output of layer l-1
  act.reserve(L + 1);
  act.push_back(x);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = (net.weights[l] * act.back()).colwise() + net.biases[l];
    if (l + 1 < L) z = z.cwiseMax(Scalar(0));
    act.push_back(std::move(z));
  }
  const Matrix& raw = act.back();

  LossAndGradient<Scalar> out;
  Matrix delta(raw.rows(), batch);
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch);
  Scalar total = 0;
  if (head == Head::Distribution) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      const auto p = drn_head(raw(0, j), raw(1, j));
      const Scalar y = targets[static_cast<std::size_t>(j)];
      total += cn0::crps(p, y);
      const auto g = cn0::crps_grad(p, y);
      delta(0, j) = g.d_mu * inv_b;
      delta(1, j) = g.d_sigma * Scalar(2) * raw(1, j) * inv_b;
    }
  } else {
    const Eigen::Index K = raw.rows();
    const Scalar inv_k = Scalar(1) / static_cast<Scalar>(K);
    auto sgn = [](Scalar v) { return static_cast<Scalar>((v > 0) - (v < 0)); };
    std::vector<Scalar> m(static_cast<std::size_t>(K));
    for (Eigen::Index j = 0; j < batch; ++j) {
      const Scalar y = targets[static_cast<std::size_t>(j)];
      for (Eigen::Index k = 0; k < K; ++k) m[static_cast<std::size_t>(k)] = clamp_member(raw(k, j));
      total += scoring::crps_ensemble<Scalar>(m, y);
      for (Eigen::Index k = 0; k < K; ++k) {
        if (!(raw(k, j) > Scalar(0))) {
          delta(k, j) = 0;
          continue;
        }
        const Scalar mk = m[static_cast<std::size_t>(k)];
        Scalar pair = 0;
        for (Eigen::Index l = 0; l < K; ++l) pair += sgn(mk - m[static_cast<std::size_t>(l)]);
        delta(k, j) = (inv_k * sgn(mk - y) - inv_k * inv_k * pair) * inv_b;
      }
    }
  }
  out.loss = total * inv_b;

  out.gradient.weights.resize(L);
  out.gradient.biases.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    out.gradient.weights[l] = delta * act[l].transpose();
    out.gradient.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix prev = net.weights[l].transpose() * delta;
      delta = prev.cwiseProduct((act[l].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
  }
  return out;
}

/// Per-feature z-score parameters taken from the training set.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // sample sd, 1 where the sd is zero

  static Standardizer fit(const Eigen::MatrixXd& features);
  template <typename Scalar>
  typename Mlp<Scalar>::Matrix apply(const Eigen::MatrixXd& features) const {
    return ((features.colwise() - mean).array().colwise() / scale.array()).matrix().template cast<Scalar>();
  }
};

/// Inputs in fixed order: ensemble mean, ensemble variance, p0, latitude,
/// longitude, altitude, lead time.
Eigen::Matrix<double, kInputDim, 1> feature_row(const PairedCase& c, const Station& s);
Eigen::Matrix<double, kInputDim, 1> feature_row(const ForecastRecord& f, const Station& s);

/// input_dim x N matrix of raw (unstandardized) features.
Eigen::MatrixXd feature_matrix(std::span<const PairedCase> cases, const std::map<int, Station>& stations);

template <typename Scalar>
struct Model {
  MlpConfig config;
  Standardizer standardizer;
  Mlp<Scalar> net;

  typename Mlp<Scalar>::Matrix raw(const Eigen::MatrixXd& features) const {
    return forward(net, standardizer.apply<Scalar>(features));
  }

  /// Predictive laws in W/m^2, one per column of `features`.
  std::vector<cn0::ParamsD> predict_distribution(const Eigen::MatrixXd& features) const {
    const auto r = raw(features);
    std::vector<cn0::ParamsD> out(static_cast<std::size_t>(r.cols()));
    for (Eigen::Index j = 0; j < r.cols(); ++j)
      out[static_cast<std::size_t>(j)] =
          drn_head(static_cast<double>(r(0, j)), static_cast<double>(r(1, j)), config.target_scale);
    return out;
  }

  /// Members in W/m^2, one vector per column of `features`.
  std::vector<std::vector<double>> predict_members(const Eigen::MatrixXd& features) const {
    const auto r = raw(features);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(r.cols()));
    for (Eigen::Index j = 0; j < r.cols(); ++j)
      out[static_cast<std::size_t>(j)] = members_head(r.col(j).template cast<double>(), config.target_scale);
    return out;
  }

  /// Mean loss in W/m^2.
  double mean_loss(const Eigen::MatrixXd& features, std::span<const double> obs) const;
};

template <typename Scalar>
double Model<Scalar>::mean_loss(const Eigen::MatrixXd& features, std::span<const double> obs) const {
  double total = 0;
  if (config.head == Head::Distribution) {
    const auto p = predict_distribution(features);
    for (std::size_t i = 0; i < p.size(); ++i) total += loss_drn(p[i], obs[i]);
  } else {
    const auto m = predict_members(features);
    for (std::size_t i = 0; i < m.size(); ++i) total += loss_members<double>(m[i], obs[i]);
  }
  return obs.empty() ? 0.0 : total / static_cast<double>(obs.size());
}

template <typename Scalar>
struct TrainResult {
  Model<Scalar> model;
  int best_epoch = 0;   // 0 means the initial weights were never improved on
  int epochs_run = 0;
  std::vector<double> train_loss;       // index 0: before any update
  std::vector<double> validation_loss;  // index 0: before any update
};

/// One training run: random validation split, shuffled mini-batches, Adam,
/// early stopping on validation loss. Returns the best-validation weights.
template <typename Scalar>
TrainResult<Scalar> train(const MlpConfig& config, const Eigen::MatrixXd& features, std::span<const double> obs,
                          Rng& rng);

/// Mean of location and of scale across runs.
cn0::ParamsD aggregate_distribution(std::span<const cn0::ParamsD> runs);

/// Sort each run's members, then average coordinate-wise.
std::vector<double> aggregate_members(std::span<const std::vector<double>> runs);

/// Mean loss increase when one feature row is shuffled across cases.
template <typename Scalar>
double permutation_importance(const Model<Scalar>& model, const Eigen::MatrixXd& features,
                              std::span<const double> obs, int feature_index, Rng& rng) {
  if (features.cols() == 0) throw std::invalid_argument("permutation_importance: no cases");
  const double baseline = model.mean_loss(features, obs);
  Eigen::MatrixXd shuffled = features;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(features.cols()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Eigen::Index j = 0; j < features.cols(); ++j)
    shuffled(feature_index, j) = features(feature_index, perm[static_cast<std::size_t>(j)]);
  return model.mean_loss(shuffled, obs) - baseline;
}

// Checkpoints: a versioned JSON document with config, standardization and
// weights. Doubles are written in shortest round-trip form, so a reload
// reproduces predictions bit-for-bit.

inline constexpr int kCheckpointVersion = 1;

template <typename Scalar>
std::string serialize(const Model<Scalar>& model);
template <typename Scalar>
Model<Scalar> deserialize(const std::string& text);

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::string& path);
template <typename Scalar>
Model<Scalar> load_checkpoint(const std::string& path);

}  // namespace solarcal::nnet
