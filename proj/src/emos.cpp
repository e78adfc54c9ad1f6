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

#include "solarcal/emos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "solarcal/error.hpp"
#include "solarcal/scoring.hpp"

namespace solarcal::emos {

Vector5 Coefficients::vector() const {
  Vector5 v;
  v << gamma0, gamma1, gamma2, delta0, delta1;
  return v;
}

Coefficients Coefficients::from_vector(const Vector5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

bool Coefficients::finite() const { return vector().allFinite(); }

namespace {

double log_sd(const EnsembleStats& s, const Options& opts) { return std::log(std::max(s.sd(), opts.sd_floor)); }

}  // namespace

cn0::ParamsD predict(const Coefficients& c, const EnsembleStats& stats, const Options& opts) {
  cn0::ParamsD p;
  p.mu = c.gamma0 + c.gamma1 * stats.mean + c.gamma2 * stats.p0;
  p.sigma = std::max(std::exp(c.delta0 + c.delta1 * log_sd(stats, opts)), opts.sigma_floor);
  return p;
}

double mean_crps(const Coefficients& c, std::span<const PairedCase> cases, const Options& opts,
                 Vector5* gradient) {
  if (cases.empty()) throw std::invalid_argument("emos::mean_crps: no cases");
  double total = 0;
  Vector5 g = Vector5::Zero();
  for (const auto& cs : cases) {
    const double ls = log_sd(cs.stats, opts);
    const double mu = c.gamma0 + c.gamma1 * cs.stats.mean + c.gamma2 * cs.stats.p0;
    const double raw_sigma = std::exp(c.delta0 + c.delta1 * ls);
    const bool floored = raw_sigma < opts.sigma_floor;
    const cn0::ParamsD p{mu, floored ? opts.sigma_floor : raw_sigma};
    total += cn0::crps(p, cs.obs);
    if (gradient) {
      const auto d = cn0::crps_grad(p, cs.obs);
      g[0] += d.d_mu;
      g[1] += d.d_mu * cs.stats.mean;
      g[2] += d.d_mu * cs.stats.p0;
      if (!floored) {
        g[3] += d.d_sigma * raw_sigma;
        g[4] += d.d_sigma * raw_sigma * ls;
      }
    }
  }
  const double n = static_cast<double>(cases.size());
  if (gradient) *gradient = g / n;
  return total / n;
}

std::array<Coefficients, 3> initial_points(std::span<const PairedCase> cases, const Options& opts) {
  const double n = static_cast<double>(cases.size());
  double mf = 0, mo = 0, mls = 0;
  for (const auto& c : cases) {
    mf += c.stats.mean;
    mo += c.obs;
    mls += log_sd(c.stats, opts);
  }
  mf /= n;
  mo /= n;
  mls /= n;
  double sff = 0, sfo = 0;
  for (const auto& c : cases) {
    sff += (c.stats.mean - mf) * (c.stats.mean - mf);
    sfo += (c.stats.mean - mf) * (c.obs - mo);
  }
  const double slope = sff > 0 ? sfo / sff : 1.0;
  const double intercept = mo - slope * mf;
  double rss = 0;
  for (const auto& c : cases) {
    const double r = c.obs - intercept - slope * c.stats.mean;
    rss += r * r;
  }
  const double resid_sd = std::max(std::sqrt(rss / std::max(1.0, n - 2.0)), opts.sd_floor);

  return {Coefficients{0, 1, 0, 0, 1},
          Coefficients{intercept, slope, 0, std::log(resid_sd) - mls, 1},
          Coefficients{0, 1, 0, std::log(resid_sd), 0}};
}

FitResult fit(std::span<const PairedCase> cases, const Options& opts) {
  if (cases.size() < opts.min_training_cases)
    throw DataError("emos::fit: " + std::to_string(cases.size()) + " training cases, need at least " +
                    std::to_string(opts.min_training_cases));

  FitResult best;
  if (std::all_of(cases.begin(), cases.end(), [](const PairedCase& c) { return c.obs == 0.0; })) {
    // Unbounded problem (loss -> 0 as mu -> -inf); use a law with negligible
    // mass above zero.
    best.coefficients = Coefficients{-10, 0, 0, 0, 0};
    best.objective = mean_crps(best.coefficients, cases, opts);
    best.start_objectives.fill(best.objective);
    best.degenerate = true;
    return best;
  }

  const auto starts = initial_points(cases, opts);
  auto objective = [&](const Vector5& x, Vector5& g) {
    const double v = mean_crps(Coefficients::from_vector(x), cases, opts, &g);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  best.objective = std::numeric_limits<double>::infinity();
  std::ostringstream diag;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    Vector5 g;
    best.start_objectives[s] = objective(starts[s].vector(), g);
    diag << " start" << s << "=" << best.start_objectives[s];
    const auto r = optim::minimize_bfgs(objective, starts[s].vector(), opts.bfgs);
    diag << "->" << r.value;
    if (std::isfinite(r.value) && r.value < best.objective) {
      best.objective = r.value;
      best.coefficients = Coefficients::from_vector(r.x);
      best.best_start = static_cast<int>(s);
      best.iterations = r.iterations;
    }
  }
  if (!std::isfinite(best.objective))
    throw NumericalError("emos::fit: objective non-finite from every start;" + diag.str());
  return best;
}

ClusterFeature feature_vector(int station_id, std::span<const PairedCase> station_cases, int quantiles) {
  if (station_cases.size() < static_cast<std::size_t>(quantiles))
    throw DataError("emos::feature_vector: station " + std::to_string(station_id) + " has " +
                    std::to_string(station_cases.size()) + " cases in the window, need " +
                    std::to_string(quantiles));
  std::vector<double> obs, err;
  obs.reserve(station_cases.size());
  err.reserve(station_cases.size());
  for (const auto& c : station_cases) {
    obs.push_back(c.obs);
    err.push_back(c.stats.mean - c.obs);
  }
  std::sort(obs.begin(), obs.end());
  std::sort(err.begin(), err.end());
  ClusterFeature f;
  f.station_id = station_id;
  f.values.reserve(static_cast<std::size_t>(2 * quantiles));
  for (const auto* sample : {&obs, &err})
    for (int i = 1; i <= quantiles; ++i)
      f.values.push_back(scoring::sorted_quantile(*sample, static_cast<double>(i) / (quantiles + 1)));
  return f;
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = x;
  const Eigen::Index n = x.rows();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = n > 1 ? (x.col(j).array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
    if (var > 0)
      z.col(j) = (x.col(j).array() - mean) / std::sqrt(var);
    else
      z.col(j).setZero();
  }
  return z;
}

std::vector<int> ClusterAssignment::members(int cluster) const {
  std::vector<int> ids;
  for (const auto& [id, c] : cluster_of)
    if (c == cluster) ids.push_back(id);
  return ids;
}

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, const KMeansOptions& opts) {
  const Eigen::Index n = points.rows();
  if (k < 1 || n < 1) throw std::invalid_argument("kmeans: need k >= 1 and at least one point");
  Eigen::MatrixXd centers(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0) {
      double u = uniform01(rng) * total;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = points.row(chosen);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < opts.max_iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Eigen::MatrixXd next = centers;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    next.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0)
        next.row(c) /= counts[c];
      else
        next.row(c) = centers.row(c);
    }
    const double moved = (next - centers).rowwise().norm().maxCoeff();
    centers = next;
    if (moved < opts.tolerance) break;
  }
  return labels;
}

ClusterAssignment cluster_stations(std::span<const ClusterFeature> features, int k, int min_per_cluster,
                                   Rng& rng, const KMeansOptions& opts) {
  if (features.empty()) throw std::invalid_argument("cluster_stations: no stations");
  std::vector<ClusterFeature> sorted(features.begin(), features.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ClusterFeature& a, const ClusterFeature& b) { return a.station_id < b.station_id; });
  const auto n = static_cast<Eigen::Index>(sorted.size());
  const auto dim = static_cast<Eigen::Index>(sorted.front().values.size());
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(sorted[static_cast<std::size_t>(i)].values.size()) != dim)
      throw std::invalid_argument("cluster_stations: feature vectors differ in length");
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(sorted[static_cast<std::size_t>(i)].values.data(), dim);
  }
  const Eigen::MatrixXd z = standardize_columns(x);

  // Values of k above n / min_per_cluster can never satisfy the size rule.
  int kk = std::max(1, std::min(k, static_cast<int>(n) / std::max(1, min_per_cluster)));
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (; kk > 1; --kk) {
    labels = kmeans(z, kk, rng, opts);
    std::vector<int> sizes(static_cast<std::size_t>(kk), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    if (*std::min_element(sizes.begin(), sizes.end()) >= min_per_cluster) break;
  }
  if (kk == 1) std::fill(labels.begin(), labels.end(), 0);

  // Canonical labels: clusters numbered by their smallest station id.
  std::map<int, int> relabel;
  ClusterAssignment out;
  out.k = kk;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    auto it = relabel.find(l);
    if (it == relabel.end()) it = relabel.emplace(l, static_cast<int>(relabel.size())).first;
    out.cluster_of[sorted[static_cast<std::size_t>(i)].station_id] = it->second;
  }
  return out;
}

SemilocalResult run_semilocal(std::span<const PairedCase> pool, const std::map<int, EnsembleStats>& targets,
                              Date target_date, int lead_h, const SemilocalOptions& opts, Rng& rng) {
  const RollingWindow window{target_date, opts.window_days};
  std::map<int, std::vector<PairedCase>> by_station;
  for (const auto& c : pool)
    if (c.lead_h == lead_h && window.contains(c.init_date())) by_station[c.station_id].push_back(c);

  std::vector<ClusterFeature> features;
  for (const auto& [id, cases] : by_station) features.push_back(feature_vector(id, cases, opts.feature_quantiles));
  if (features.empty())
    throw DataError("emos::run_semilocal: no training cases before " + format_date(target_date) +
                    " at lead " + std::to_string(lead_h));

  SemilocalResult out;
  out.target_date = target_date;
  out.lead_h = lead_h;
  out.assignment = cluster_stations(features, opts.clusters, opts.min_per_cluster, rng);

  for (int c = 0; c < out.assignment.k; ++c) {
    ClusterFit cf;
    cf.cluster = c;
    cf.stations = out.assignment.members(c);
    std::vector<PairedCase> pooled;
    for (int id : cf.stations) pooled.insert(pooled.end(), by_station[id].begin(), by_station[id].end());
    cf.training_cases = pooled.size();
    try {
      cf.fit = fit(pooled, opts.fit);
    } catch (const Error& e) {
      std::string ids;
      for (int id : cf.stations) ids += (ids.empty() ? "" : ",") + std::to_string(id);
      throw NumericalError(std::string(e.what()) + " [cluster " + std::to_string(c) + " stations " + ids +
                           ", lead " + std::to_string(lead_h) + "]");
    }
    out.fits.push_back(std::move(cf));
  }

  for (const auto& [id, stats] : targets) {
    auto it = out.assignment.cluster_of.find(id);
    if (it == out.assignment.cluster_of.end())
      throw DataError("emos::run_semilocal: station " + std::to_string(id) + " has no training data");
    out.predictions[id] = predict(out.fits[static_cast<std::size_t>(it->second)].fit.coefficients, stats, opts.fit);
  }
  return out;
}

std::string store_header() {
  return "format_version,target_date,lead_h,cluster,stations,gamma0,gamma1,gamma2,delta0,delta1,objective,"
         "degenerate";
}

void append_to_store(const std::string& path, const SemilocalResult& result) {
  bool fresh = true;
  {
    std::ifstream probe(path);
    fresh = !probe || probe.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open model store '" + path + "' for appending");
  if (fresh) out << store_header() << '\n';
  for (const auto& f : result.fits) {
    std::string ids;
    for (int id : f.stations) ids += (ids.empty() ? "" : ";") + std::to_string(id);
    const auto& c = f.fit.coefficients;
    out << kStoreVersion << ',' << format_date(result.target_date) << ',' << result.lead_h << ',' << f.cluster
        << ',' << ids << ',' << csv::format_double(c.gamma0) << ',' << csv::format_double(c.gamma1) << ','
        << csv::format_double(c.gamma2) << ',' << csv::format_double(c.delta0) << ','
        << csv::format_double(c.delta1) << ',' << csv::format_double(f.fit.objective) << ','
        << (f.fit.degenerate ? 1 : 0) << '\n';
  }
}

std::vector<StoredFit> read_store(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != store_header())
    throw DataError(source + ": not an EMOS coefficient store (bad header)");
  std::vector<StoredFit> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    auto bad = [&](const std::string& what) {
      return DataError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    if (f.size() != 12) throw bad("expected 12 fields");
    if (csv::parse_int(f[0]) != kStoreVersion) throw bad("unsupported store version '" + f[0] + "'");
    StoredFit s;
    auto d = try_parse_date(f[1]);
    auto lead = csv::parse_int(f[2]);
    auto cl = csv::parse_int(f[3]);
    if (!d || !lead || !cl) throw bad("malformed key columns");
    s.target_date = *d;
    s.lead_h = *lead;
    s.cluster = *cl;
    std::stringstream ids(f[4]);
    for (std::string tok; std::getline(ids, tok, ';');) {
      auto id = csv::parse_int(tok);
      if (!id) throw bad("malformed station list");
      s.stations.push_back(*id);
    }
    double v[6];
    for (int i = 0; i < 6; ++i) {
      auto x = csv::parse_double(f[static_cast<std::size_t>(5 + i)]);
      if (!x) throw bad("malformed coefficient");
      v[i] = *x;
    }
    s.coefficients = {v[0], v[1], v[2], v[3], v[4]};
    s.objective = v[5];
    s.degenerate = f[11] == "1";
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<StoredFit> read_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model store '" + path + "'");
  return read_store(in, path);
}

}  // namespace solarcal::emos
