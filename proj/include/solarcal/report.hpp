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

// Verification of predictions against observations and report rendering.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "solarcal/pipeline.hpp"
#include "solarcal/scoring.hpp"

namespace solarcal::report {

using pipeline::ExperimentConfig;
using pipeline::Method;
using pipeline::Prediction;

struct CaseScore {
  int station_id = 0;
  TimePoint init_time;
  int lead_h = 1;
  double obs = 0;
  double crps = 0;
  double median = 0;
  scoring::Interval interval;
  double pit = 0;  // distributional methods
  int rank = 0;    // ensemble methods, 1..K+1
};

/// Scores one method's predictions on every case that has an observation.
/// Ties (rank) and the point mass (PIT) are randomized from per-case streams.
std::vector<CaseScore> score_cases(const ExperimentConfig& config, Method method,
                                   std::span<const Prediction> predictions, std::span<const PairedCase> cases);

/// Raw ensemble treated as a prediction set.
std::vector<Prediction> raw_predictions(std::span<const PairedCase> cases);

struct LeadScores {
  int lead_h = 1;
  std::size_t n = 0;
  double crps = 0;
  double mae = 0;
  double coverage_pct = 0;
  double mean_width = 0;
  std::optional<double> crpss;
  std::optional<scoring::BootstrapCI> crpss_ci;
  bool low_signal = false;
};

struct PooledScores {
  std::string lead_set;
  std::size_t n = 0;
  double crps = 0;
  double mae = 0;
  double coverage_pct = 0;
  double mean_width = 0;
  std::optional<double> crpss;
  std::optional<scoring::BootstrapCI> crpss_ci;
};

struct HistogramSummary {
  std::string lead_set;
  std::string kind;  // "rank" or "pit"
  scoring::RankHistogram histogram;
  double reliability_index = 0;
};

struct MethodReport {
  Method method = Method::Raw;
  std::size_t cases = 0;
  std::vector<LeadScores> by_lead;
  std::vector<PooledScores> pooled;
  std::vector<HistogramSummary> histograms;
};

struct VerificationReport {
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::size_t verification_days = 0;
  std::size_t cases = 0;
  bool bootstrap = false;
  double nominal_coverage_pct = 0;
  std::vector<MethodReport> methods;
  std::vector<std::string> failures;

  const MethodReport* find(Method m) const;
  bool empty() const { return cases == 0; }
};

/// Aggregates predictions into a report. Raw scores serve as the CRPSS
/// reference whether or not raw is among the reported methods.
VerificationReport verify(const ExperimentConfig& config, std::span<const Prediction> predictions,
                          std::span<const PairedCase> cases, std::size_t verification_days,
                          std::vector<std::string> failures = {});

/// Paired cases whose init date lies in the verification period.
std::vector<PairedCase> verification_cases(const ExperimentConfig& config, std::span<const PairedCase> cases);

struct ExperimentResult {
  std::vector<Prediction> predictions;
  VerificationReport report;
};

/// Rolling-origin loop over the verification period followed by
/// verification. Per-day method failures are recorded and skipped.
ExperimentResult run_experiment(const ExperimentConfig& config, const pipeline::Dataset& data,
                                const std::function<void(const pipeline::DayOutcome&)>& on_day = {});

/// Methods that produced no scored case although cases exist.
std::vector<Method> methods_without_predictions(const VerificationReport& report);

/// Label for a union of lead ranges, e.g. "13-22+37-46".
std::string lead_set_label(std::span<const pipeline::LeadRange> ranges);

nlohmann::json to_json(const VerificationReport& report);
VerificationReport from_json(const nlohmann::json& doc);

/// Writes summary.json plus long-format CSV tables (crps, crpss, coverage,
/// mae, pooled, histograms). CI columns appear only when the report carries
/// bootstrap intervals.
void render(const VerificationReport& report, const std::string& outdir);

}  // namespace solarcal::report
