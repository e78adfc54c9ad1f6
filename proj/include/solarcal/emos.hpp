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

// Censored-normal EMOS.
//
// Location and scale of the zero-censored normal are linked to ensemble
// statistics through
//   mu    = gamma0 + gamma1 * mean + gamma2 * p0
//   sigma = exp(delta0 + delta1 * log max(sd, floor))
// and the five coefficients minimize the mean closed-form CRPS over the
// training cases. Stations are pooled within k-means clusters built from
// observation climatology and ensemble-mean error quantiles.

#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "solarcal/cn0.hpp"
#include "solarcal/data_model.hpp"
#include "solarcal/optim.hpp"
#include "solarcal/rng.hpp"

namespace solarcal::emos {

using Vector5 = Eigen::Matrix<double, 5, 1>;

struct Coefficients {
  double gamma0 = 0;
  double gamma1 = 1;
  double gamma2 = 0;
  double delta0 = 0;
  double delta1 = 1;

  Vector5 vector() const;
  static Coefficients from_vector(const Vector5& v);
  bool finite() const;
};

struct Options {
  double sd_floor = 1e-3;      // S' = max(S, sd_floor) before the log link
  double sigma_floor = 1e-6;   // hard floor on predicted sigma
  std::size_t min_training_cases = 25;
  optim::BfgsOptions bfgs;
};

cn0::ParamsD predict(const Coefficients& c, const EnsembleStats& stats, const Options& opts = {});

/// Mean CRPS over the cases and its gradient in coefficient space.
double mean_crps(const Coefficients& c, std::span<const PairedCase> cases, const Options& opts = {},
                 Vector5* gradient = nullptr);

/// Identity links, regression-matched and homoscedastic starts.
std::array<Coefficients, 3> initial_points(std::span<const PairedCase> cases, const Options& opts = {});

struct FitResult {
  Coefficients coefficients;
  double objective = 0;
  std::array<double, 3> start_objectives{};
  int best_start = 0;
  int iterations = 0;
  bool degenerate = false;  // every training observation was zero
};

FitResult fit(std::span<const PairedCase> cases, const Options& opts = {});

// Clustering.

struct ClusterFeature {
  int station_id = 0;
  std::vector<double> values;  // climatology quantiles, then error quantiles
};

/// Quantiles at levels i/(q+1), i = 1..q, of the observations and of
/// (ensemble mean - observation).
ClusterFeature feature_vector(int station_id, std::span<const PairedCase> station_cases,
                              int quantiles = 12);

/// Column-wise z-scores (sample sd); zero-variance columns become 0.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

struct ClusterAssignment {
  std::map<int, int> cluster_of;  // station id -> cluster index
  int k = 1;

  std::vector<int> members(int cluster) const;
};

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;
};

/// Lloyd's k-means with k-means++ seeding on a row-per-point matrix.
/// Returns a label per row; labels may leave clusters empty.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, const KMeansOptions& opts = {});

/// Clusters stations on standardized features, reducing k by one until
/// every cluster holds at least `min_per_cluster` stations. Results depend
/// on station ids only, not on input order.
ClusterAssignment cluster_stations(std::span<const ClusterFeature> features, int k, int min_per_cluster,
                                   Rng& rng, const KMeansOptions& opts = {});

struct SemilocalOptions {
  int window_days = 85;
  int clusters = 6;
  int min_per_cluster = 3;
  int feature_quantiles = 12;
  Options fit;
};

struct ClusterFit {
  int cluster = 0;
  std::vector<int> stations;
  std::size_t training_cases = 0;
  FitResult fit;
};

struct SemilocalResult {
  Date target_date;
  int lead_h = 1;
  ClusterAssignment assignment;
  std::vector<ClusterFit> fits;               // one per cluster
  std::map<int, cn0::ParamsD> predictions;    // station id -> predictive law
};

/// Clusters, fits and predicts for one verification date and lead time.
/// `pool` may contain any dates; only the window preceding `target_date`
/// at `lead_h` is used for training.
SemilocalResult run_semilocal(std::span<const PairedCase> pool, const std::map<int, EnsembleStats>& targets,
                              Date target_date, int lead_h, const SemilocalOptions& opts, Rng& rng);

// Append-only coefficient store, one CSV row per (date, lead, cluster).

inline constexpr int kStoreVersion = 1;

struct StoredFit {
  Date target_date;
  int lead_h = 1;
  int cluster = 0;
  std::vector<int> stations;
  Coefficients coefficients;
  double objective = 0;
  bool degenerate = false;
};

std::string store_header();
void append_to_store(const std::string& path, const SemilocalResult& result);
std::vector<StoredFit> read_store(const std::string& path);
std::vector<StoredFit> read_store(std::istream& in, const std::string& source);

}  // namespace solarcal::emos
