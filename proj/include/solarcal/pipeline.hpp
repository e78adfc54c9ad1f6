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

// Rolling-origin experiment: configuration, per-day fitting and prediction,
// verification against observations.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "solarcal/cn0.hpp"
#include "solarcal/data_model.hpp"
#include "solarcal/emos.hpp"
#include "solarcal/nnet.hpp"
#include "solarcal/scoring.hpp"
#include "solarcal/synth.hpp"

namespace solarcal::pipeline {

enum class Method { Raw, Emos, EmosQ, Drn, DrnQ, Corrected };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
std::vector<Method> parse_methods(const std::string& comma_list);

/// Distributional methods are scored as CN0 laws; the rest as 8-member ensembles.
inline bool is_distribution(Method m) { return m == Method::Emos || m == Method::Drn; }

/// Closed lead-time range [first, last].
struct LeadRange {
  int first = 1;
  int last = kMaxLead;

  bool contains(int lead) const { return lead >= first && lead <= last; }
  std::string label() const;
  static LeadRange parse(const std::string& text);  // "a:b"
};

struct ExperimentConfig {
  // Input files; used when `synthetic` is absent.
  std::string stations_path;
  std::string forecasts_path;
  std::string observations_path;
  bool lax = false;
  std::optional<synth::SyntheticSpec> synthetic;

  Date verification_start;
  Date verification_end;  // inclusive

  std::vector<Method> methods{Method::Raw, Method::Emos, Method::EmosQ, Method::Drn, Method::DrnQ,
                              Method::Corrected};

  emos::SemilocalOptions emos;  // window 85 d, 6 clusters
  nnet::MlpConfig drn;          // distribution head
  nnet::MlpConfig corrected;    // members head
  int drn_window_days = 20;
  int corrected_window_days = 25;
  std::string precision = "double";  // network scalar: double | float

  std::vector<LeadRange> lead_sets{{12, 24}, {36, 48}};
  std::vector<LeadRange> midday{{13, 22}, {37, 46}};
  std::vector<LeadRange> low_signal{{1, 11}, {25, 35}};
  double min_obs = 7.5;
  double interval_alpha = 2.0 / 9.0;
  int pit_bins = 9;

  bool bootstrap = true;
  scoring::BootstrapOptions bootstrap_options;

  std::uint64_t seed = 20210401;
  int threads = 1;

  int max_window_days() const;
  bool wants(Method m) const;
  bool is_low_signal(int lead) const;
  bool is_midday(int lead) const;
  /// Structural checks that need no data.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

struct Dataset {
  std::vector<Station> stations;
  std::vector<ForecastRecord> forecasts;
  std::vector<Observation> observations;
  PairingResult pairs;
  std::size_t dropped_rows = 0;

  std::map<int, Station> station_map() const;
  Date first_date() const;
  Date last_date() const;
};

/// Reads files or generates synthetic data, then pairs.
Dataset load_dataset(const ExperimentConfig& config);

/// Data-dependent checks: windows must fit before the verification start.
void validate_against(const ExperimentConfig& config, const Dataset& data);

/// One predictive forecast for (method, station, init time, lead).
struct Prediction {
  Method method = Method::Raw;
  int station_id = 0;
  TimePoint init_time;
  int lead_h = 1;
  cn0::ParamsD law{};  // distributional methods
  Members members{};   // ensemble methods, sorted ascending
};

void write_predictions(std::ostream& out, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::string& path);
std::vector<Prediction> read_predictions(std::istream& in, const std::string& source);

/// Training cases strictly before the verification day, for one window length.
std::vector<PairedCase> training_window(std::span<const PairedCase> cases, Date day, int window_days);

/// Throws std::logic_error if any training case is on or after `day`.
void audit_no_leakage(std::span<const PairedCase> training, Date day);

/// Forecast records initialized on `day`.
std::vector<ForecastRecord> forecasts_on(std::span<const ForecastRecord> forecasts, Date day);

// Per-day model fitting. Randomness is keyed on (seed, day).

std::vector<emos::SemilocalResult> fit_emos_day(const ExperimentConfig& config, const Dataset& data, Date day);

template <typename Scalar>
std::vector<nnet::Model<Scalar>> train_networks_day(const ExperimentConfig& config, const Dataset& data, Date day,
                                                    nnet::Head head);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome is order independent.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct DayOutcome {
  Date day;
  std::vector<Prediction> predictions;
  std::vector<std::string> failures;  // "method: reason"
};

/// Fits every requested method for one verification day and predicts all of
/// that day's forecasts.
DayOutcome predict_day(const ExperimentConfig& config, const Dataset& data, Date day);

/// Predictions from stored EMOS coefficients.
std::vector<Prediction> predict_emos(std::span<const emos::StoredFit> fits, std::span<const ForecastRecord> targets,
                                     const emos::Options& opts, Date day);

/// Predictions from a set of trained networks (one per run).
template <typename Scalar>
std::vector<Prediction> predict_networks(std::span<const nnet::Model<Scalar>> runs,
                                         std::span<const ForecastRecord> targets,
                                         const std::map<int, Station>& stations, bool with_quantile_variant);

/// Quantile-sampled ensemble of a CN0 law, levels k/9.
Members quantile_members(const cn0::ParamsD& law);

}  // namespace solarcal::pipeline
