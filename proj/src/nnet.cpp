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

#include "solarcal/nnet.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace solarcal::nnet {

std::string to_string(Head head) { return head == Head::Distribution ? "distribution" : "members"; }

Head head_from_string(const std::string& name) {
  if (name == "distribution") return Head::Distribution;
  if (name == "members") return Head::Members;
  throw ConfigError("unknown network head '" + name + "' (expected distribution|members)");
}

std::vector<int> MlpConfig::layer_sizes() const {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(outputs());
  return sizes;
}

void MlpConfig::validate() const {
  if (input_dim < 1) throw ConfigError("nnet: input_dim must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("nnet: hidden layer widths must be positive");
  if (members < 1) throw ConfigError("nnet: members must be positive");
  if (batch_size < 1) throw ConfigError("nnet: batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("nnet: learning_rate must be positive");
  if (max_epochs < 1) throw ConfigError("nnet: max_epochs must be positive");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw ConfigError("nnet: validation_fraction must lie in (0, 1)");
  if (patience < 0) throw ConfigError("nnet: patience must be non-negative");
  if (runs < 1) throw ConfigError("nnet: runs must be at least 1");
  if (!(target_scale > 0)) throw ConfigError("nnet: target_scale must be positive");
}

std::size_t param_count(const MlpConfig& config) {
  const auto sizes = config.layer_sizes();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l]) * static_cast<std::size_t>(sizes[l + 1]) +
         static_cast<std::size_t>(sizes[l + 1]);
  return n;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  Standardizer s;
  const Eigen::Index n = features.cols();
  s.mean = features.rowwise().mean();
  s.scale = Eigen::VectorXd::Ones(features.rows());
  if (n > 1) {
    const Eigen::VectorXd var =
        (features.colwise() - s.mean).array().square().rowwise().sum() / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < var.size(); ++i)
      if (var[i] > 0) s.scale[i] = std::sqrt(var[i]);
  }
  return s;
}

namespace {

Eigen::Matrix<double, kInputDim, 1> make_row(const EnsembleStats& st, const Station& s, int lead_h) {
  Eigen::Matrix<double, kInputDim, 1> r;
  r << st.mean, st.variance, st.p0, s.latitude, s.longitude, s.altitude, static_cast<double>(lead_h);
  return r;
}

const Station& station_for(const std::map<int, Station>& stations, int id) {
  auto it = stations.find(id);
  if (it == stations.end()) throw DataError("nnet: unknown station id " + std::to_string(id));
  return it->second;
}

}  // namespace

Eigen::Matrix<double, kInputDim, 1> feature_row(const PairedCase& c, const Station& s) {
  return make_row(c.stats, s, c.lead_h);
}

Eigen::Matrix<double, kInputDim, 1> feature_row(const ForecastRecord& f, const Station& s) {
  return make_row(ensemble_stats(f.members), s, f.lead_h);
}

Eigen::MatrixXd feature_matrix(std::span<const PairedCase> cases, const std::map<int, Station>& stations) {
  Eigen::MatrixXd x(kInputDim, static_cast<Eigen::Index>(cases.size()));
  for (std::size_t j = 0; j < cases.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = feature_row(cases[j], station_for(stations, cases[j].station_id));
  return x;
}

namespace {

// Mean loss in training (scaled) units, no gradient.
template <typename Scalar>
double scaled_loss(const Mlp<Scalar>& net, Head head, const typename Mlp<Scalar>::Matrix& x,
                   std::span<const Scalar> y) {
  if (x.cols() == 0) return 0.0;
  const auto raw = net.forward(x);
  double total = 0;
  std::vector<Scalar> m(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    if (head == Head::Distribution) {
      total += static_cast<double>(loss_drn(drn_head(raw(0, j), raw(1, j)), y[static_cast<std::size_t>(j)]));
    } else {
      for (Eigen::Index k = 0; k < raw.rows(); ++k) m[static_cast<std::size_t>(k)] = raw(k, j);
      total += static_cast<double>(loss_members<Scalar>(m, y[static_cast<std::size_t>(j)]));
    }
  }
  return total / static_cast<double>(raw.cols());
}

template <typename Scalar>
struct Adam {
  Mlp<Scalar> m, v;
  int t = 0;

  explicit Adam(const Mlp<Scalar>& shape) : m(shape), v(shape) {
    m.set_zero();
    v.set_zero();
  }

  void step(Mlp<Scalar>& net, const Mlp<Scalar>& g, const MlpConfig& c) {
    ++t;
    const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
    const Scalar lr = static_cast<Scalar>(c.learning_rate);
    const Scalar eps = static_cast<Scalar>(c.adam_epsilon);
    const Scalar corr1 = Scalar(1) - static_cast<Scalar>(std::pow(c.beta1, t));
    const Scalar corr2 = Scalar(1) - static_cast<Scalar>(std::pow(c.beta2, t));
    auto update = [&](auto& w, auto& mw, auto& vw, const auto& gw) {
      mw = b1 * mw + (Scalar(1) - b1) * gw;
      vw = b2 * vw + (Scalar(1) - b2) * gw.cwiseProduct(gw);
      w.array() -= lr * (mw.array() / corr1) / ((vw.array() / corr2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      update(net.weights[l], m.weights[l], v.weights[l], g.weights[l]);
      update(net.biases[l], m.biases[l], v.biases[l], g.biases[l]);
    }
  }
};

}  // namespace

template <typename Scalar>
TrainResult<Scalar> train(const MlpConfig& config, const Eigen::MatrixXd& features, std::span<const double> obs,
                          Rng& rng) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  config.validate();
  const auto n = static_cast<std::size_t>(features.cols());
  if (n == 0) throw DataError("nnet::train: no training cases");
  if (obs.size() != n) throw std::invalid_argument("nnet::train: feature/target size mismatch");
  if (features.rows() != config.input_dim)
    throw std::invalid_argument("nnet::train: feature rows do not match input_dim");

  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t n_val = 0;
  if (n >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.validation_fraction * n)), 1, n - 1);
  std::vector<Eigen::Index> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Eigen::Index> tr_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());

  TrainResult<Scalar> res;
  res.model.config = config;
  const Eigen::MatrixXd tr_raw = features(Eigen::all, tr_idx);
  res.model.standardizer = Standardizer::fit(tr_raw);
  const Matrix x_tr = res.model.standardizer.template apply<Scalar>(tr_raw);
  const Matrix x_val = res.model.standardizer.template apply<Scalar>(features(Eigen::all, val_idx));
  const Scalar inv_scale = static_cast<Scalar>(1.0 / config.target_scale);
  std::vector<Scalar> y_tr(tr_idx.size()), y_val(val_idx.size());
  for (std::size_t i = 0; i < tr_idx.size(); ++i) y_tr[i] = static_cast<Scalar>(obs[static_cast<std::size_t>(tr_idx[i])]) * inv_scale;
  for (std::size_t i = 0; i < val_idx.size(); ++i) y_val[i] = static_cast<Scalar>(obs[static_cast<std::size_t>(val_idx[i])]) * inv_scale;

  Mlp<Scalar> net = Mlp<Scalar>::he_uniform(config.layer_sizes(), rng);
  Adam<Scalar> adam(net);

  // Without a validation split, early stopping monitors the training loss.
  auto monitor = [&](const Mlp<Scalar>& w) {
    return n_val > 0 ? scaled_loss<Scalar>(w, config.head, x_val, y_val)
                     : scaled_loss<Scalar>(w, config.head, x_tr, y_tr);
  };
  res.train_loss.push_back(scaled_loss<Scalar>(net, config.head, x_tr, y_tr));
  res.validation_loss.push_back(monitor(net));
  double best_val = res.validation_loss.back();
  Mlp<Scalar> best = net;
  int bad_epochs = 0;
  const int stop_after = std::max(1, config.patience);

  const std::size_t ntr = tr_idx.size();
  std::vector<Eigen::Index> order(ntr);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<Scalar> yb;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < ntr; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(ntr, start + static_cast<std::size_t>(config.batch_size));
      std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix xb = x_tr(Eigen::all, cols);
      yb.resize(cols.size());
      for (std::size_t i = 0; i < cols.size(); ++i) yb[i] = y_tr[static_cast<std::size_t>(cols[i])];
      const auto lg = backward<Scalar>(net, config.head, xb, yb);
      if (!std::isfinite(static_cast<double>(lg.loss)) || !lg.gradient.all_finite())
        throw NumericalError("nnet::train: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(net, lg.gradient, config);
      epoch_loss += static_cast<double>(lg.loss) * static_cast<double>(cols.size());
    }
    res.epochs_run = epoch;
    res.train_loss.push_back(epoch_loss / static_cast<double>(ntr));
    const double val = monitor(net);
    if (!std::isfinite(val)) throw NumericalError("nnet::train: non-finite validation loss at epoch " + std::to_string(epoch));
    res.validation_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = net;
      res.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= stop_after) {
      break;
    }
  }
  res.model.net = std::move(best);
  return res;
}

template TrainResult<double> train<double>(const MlpConfig&, const Eigen::MatrixXd&, std::span<const double>, Rng&);
template TrainResult<float> train<float>(const MlpConfig&, const Eigen::MatrixXd&, std::span<const double>, Rng&);

cn0::ParamsD aggregate_distribution(std::span<const cn0::ParamsD> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_distribution: no runs");
  cn0::ParamsD out{0, 0};
  for (const auto& p : runs) {
    out.mu += p.mu;
    out.sigma += p.sigma;
  }
  out.mu /= static_cast<double>(runs.size());
  out.sigma /= static_cast<double>(runs.size());
  return out;
}

std::vector<double> aggregate_members(std::span<const std::vector<double>> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_members: no runs");
  const std::size_t k = runs.front().size();
  std::vector<double> out(k, 0.0);
  std::vector<double> sorted;
  for (const auto& r : runs) {
    if (r.size() != k) throw std::invalid_argument("aggregate_members: runs differ in member count");
    sorted = r;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < k; ++i) out[i] += sorted[i];
  }
  for (auto& v : out) v /= static_cast<double>(runs.size());
  return out;
}

// Checkpoints.

namespace {

using nlohmann::json;

template <typename Derived>
json to_array(const Eigen::DenseBase<Derived>& m) {
  json a = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(static_cast<double>(m(i, j)));
  return a;
}

template <typename MatrixType>
MatrixType from_array(const json& a, Eigen::Index rows, Eigen::Index cols) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols)
    throw DataError("checkpoint: array size does not match declared shape");
  MatrixType m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<typename MatrixType::Scalar>(a[k++].get<double>());
  return m;
}

template <typename Scalar>
constexpr const char* scalar_name() {
  return sizeof(Scalar) == sizeof(float) ? "float32" : "float64";
}

}  // namespace

template <typename Scalar>
std::string serialize(const Model<Scalar>& model) {
  const auto& c = model.config;
  json j;
  j["format"] = "solarcal-mlp";
  j["version"] = kCheckpointVersion;
  j["scalar"] = scalar_name<Scalar>();
  j["config"] = {{"input_dim", c.input_dim},
                 {"hidden", c.hidden},
                 {"head", to_string(c.head)},
                 {"members", c.members},
                 {"batch_size", c.batch_size},
                 {"learning_rate", c.learning_rate},
                 {"beta1", c.beta1},
                 {"beta2", c.beta2},
                 {"adam_epsilon", c.adam_epsilon},
                 {"max_epochs", c.max_epochs},
                 {"validation_fraction", c.validation_fraction},
                 {"patience", c.patience},
                 {"runs", c.runs},
                 {"seed", c.seed},
                 {"target_scale", c.target_scale}};
  j["standardizer"] = {{"mean", to_array(model.standardizer.mean)}, {"scale", to_array(model.standardizer.scale)}};
  json layers = json::array();
  for (std::size_t l = 0; l < model.net.layers(); ++l) {
    layers.push_back({{"rows", model.net.weights[l].rows()},
                      {"cols", model.net.weights[l].cols()},
                      {"weights", to_array(model.net.weights[l])},
                      {"bias", to_array(model.net.biases[l])}});
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

template <typename Scalar>
Model<Scalar> deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "solarcal-mlp") throw DataError("checkpoint: not a solarcal network checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
  if (j.value("scalar", "") != scalar_name<Scalar>())
    throw DataError("checkpoint: stored as " + j.value("scalar", std::string("?")) + ", requested " +
                    scalar_name<Scalar>());
  try {
    Model<Scalar> m;
    const auto& c = j.at("config");
    m.config.input_dim = c.at("input_dim").get<int>();
    m.config.hidden = c.at("hidden").get<std::vector<int>>();
    m.config.head = head_from_string(c.at("head").get<std::string>());
    m.config.members = c.at("members").get<int>();
    m.config.batch_size = c.at("batch_size").get<int>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.beta1 = c.at("beta1").get<double>();
    m.config.beta2 = c.at("beta2").get<double>();
    m.config.adam_epsilon = c.at("adam_epsilon").get<double>();
    m.config.max_epochs = c.at("max_epochs").get<int>();
    m.config.validation_fraction = c.at("validation_fraction").get<double>();
    m.config.patience = c.at("patience").get<int>();
    m.config.runs = c.at("runs").get<int>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.target_scale = c.at("target_scale").get<double>();
    const auto dim = static_cast<Eigen::Index>(m.config.input_dim);
    m.standardizer.mean = from_array<Eigen::VectorXd>(j.at("standardizer").at("mean"), dim, 1);
    m.standardizer.scale = from_array<Eigen::VectorXd>(j.at("standardizer").at("scale"), dim, 1);
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      m.net.weights.push_back(from_array<typename Mlp<Scalar>::Matrix>(layer.at("weights"), rows, cols));
      m.net.biases.push_back(from_array<typename Mlp<Scalar>::Vector>(layer.at("bias"), rows, 1));
    }
    if (m.net.layer_sizes() != m.config.layer_sizes())
      throw DataError("checkpoint: layer shapes do not match the stored configuration");
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << serialize(model);
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize<Scalar>(ss.str());
}

template std::string serialize<double>(const Model<double>&);
template std::string serialize<float>(const Model<float>&);
template Model<double> deserialize<double>(const std::string&);
template Model<float> deserialize<float>(const std::string&);
template void save_checkpoint<double>(const Model<double>&, const std::string&);
template void save_checkpoint<float>(const Model<float>&, const std::string&);
template Model<double> load_checkpoint<double>(const std::string&);
template Model<float> load_checkpoint<float>(const std::string&);

}  // namespace solarcal::nnet
