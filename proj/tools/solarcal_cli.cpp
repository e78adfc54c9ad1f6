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

// solarcal: post-process and verify irradiance ensemble forecasts.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "solarcal/error.hpp"
#include "solarcal/pipeline.hpp"
#include "solarcal/report.hpp"
#include "solarcal/synth.hpp"

namespace fs = std::filesystem;
using namespace solarcal;
using pipeline::ExperimentConfig;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string lead_range;
  std::optional<double> min_obs;
  std::string methods;
  std::optional<int> threads;
  bool lax = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config_path, "Experiment configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "Root seed; overrides the config");
  cmd->add_option("--lead-range", o.lead_range, "Replace the reported lead sets with one range a:b");
  cmd->add_option("--min-obs", o.min_obs, "Observation threshold for pooled scores (W/m^2)");
  cmd->add_option("--methods", o.methods, "Comma list of raw,emos,emos_q,drn,drn_q,corrected");
  cmd->add_option("--threads", o.threads, "Worker threads");
  cmd->add_flag("--lax", o.lax, "Ignore unknown input columns");
  cmd->add_flag("--quiet", o.quiet, "Suppress progress output");
}

ExperimentConfig load(const Overrides& o) {
  ExperimentConfig c = pipeline::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.lead_range.empty()) c.lead_sets = {pipeline::LeadRange::parse(o.lead_range)};
  if (o.min_obs) c.min_obs = *o.min_obs;
  if (!o.methods.empty()) c.methods = pipeline::parse_methods(o.methods);
  if (o.threads) c.threads = *o.threads;
  if (o.lax) c.lax = true;
  c.validate();
  return c;
}

std::vector<Date> days_of(const ExperimentConfig& c, const std::string& date) {
  if (!date.empty()) {
    const auto d = try_parse_date(date);
    if (!d) throw ConfigError("--date '" + date + "' is not YYYY-MM-DD");
    if (*d < c.verification_start || *d > c.verification_end)
      throw ConfigError("--date " + date + " lies outside the verification period");
    return {*d};
  }
  std::vector<Date> out;
  for (Date d = c.verification_start; d <= c.verification_end; d += std::chrono::days(1)) out.push_back(d);
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory '" + dir + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

void progress(const Overrides& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << '\n';
}

int finish(const report::VerificationReport& rep) {
  for (const auto& f : rep.failures) std::cerr << "warning: " << f << '\n';
  const auto missing = report::methods_without_predictions(rep);
  if (!missing.empty()) {
    std::string names;
    for (auto m : missing) names += (names.empty() ? "" : ", ") + pipeline::to_string(m);
    std::cerr << "error: no successful verification day for: " << names << '\n';
    return NumericalError("").exit_code();
  }
  return 0;
}

fs::path network_dir(const std::string& root, nnet::Head head, Date day) {
  return fs::path(root) / (head == nnet::Head::Distribution ? "drn" : "corrected") / format_date(day);
}

template <typename Scalar>
void train_and_save(const ExperimentConfig& c, const pipeline::Dataset& data, Date day, nnet::Head head,
                    const std::string& out) {
  const auto runs = pipeline::train_networks_day<Scalar>(c, data, day, head);
  const auto dir = network_dir(out, head, day);
  ensure_dir(dir.string());
  for (std::size_t r = 0; r < runs.size(); ++r)
    nnet::save_checkpoint(runs[r], (dir / ("run" + std::to_string(r) + ".json")).string());
}

template <typename Scalar>
std::vector<pipeline::Prediction> load_and_predict(const ExperimentConfig& c, const pipeline::Dataset& data, Date day,
                                                   nnet::Head head, const std::string& models,
                                                   std::span<const ForecastRecord> targets) {
  const auto dir = network_dir(models, head, day);
  const int runs = head == nnet::Head::Distribution ? c.drn.runs : c.corrected.runs;
  std::vector<nnet::Model<Scalar>> nets;
  for (int r = 0; r < runs; ++r) {
    const auto path = dir / ("run" + std::to_string(r) + ".json");
    if (!fs::exists(path)) throw DataError("missing checkpoint '" + path.string() + "'");
    nets.push_back(nnet::load_checkpoint<Scalar>(path.string()));
  }
  return pipeline::predict_networks<Scalar>(nets, targets, data.station_map(),
                                            head == nnet::Head::Distribution && c.wants(pipeline::Method::DrnQ));
}

int cmd_synth(const Overrides& o, const std::string& out) {
  synth::SyntheticSpec spec;
  if (!o.config_path.empty()) {
    const auto c = pipeline::load_config(o.config_path);
    if (!c.synthetic) throw ConfigError("config has no synthetic block");
    spec = *c.synthetic;
  }
  if (o.seed) spec.seed = *o.seed;
  const auto data = synth::generate(spec);
  ensure_dir(out);
  auto st = open_out(fs::path(out) / "stations.csv");
  write_stations(st, data.stations);
  auto fc = open_out(fs::path(out) / "forecasts.csv");
  write_forecasts(fc, data.forecasts);
  auto ob = open_out(fs::path(out) / "observations.csv");
  write_observations(ob, data.observations);
  progress(o, "wrote " + std::to_string(data.stations.size()) + " stations, " +
                  std::to_string(data.forecasts.size()) + " forecasts, " +
                  std::to_string(data.observations.size()) + " observations to " + out);
  return 0;
}

int cmd_train_emos(const Overrides& o, const std::string& date, const std::string& out) {
  const auto c = load(o);
  const auto data = pipeline::load_dataset(c);
  pipeline::validate_against(c, data);
  ensure_dir(out);
  const auto store = (fs::path(out) / "emos_store.csv").string();
  for (Date d : days_of(c, date)) {
    for (const auto& r : pipeline::fit_emos_day(c, data, d)) emos::append_to_store(store, r);
    progress(o, "emos " + format_date(d));
  }
  return 0;
}

int cmd_train_net(const Overrides& o, const std::string& date, const std::string& out, nnet::Head head) {
  const auto c = load(o);
  const auto data = pipeline::load_dataset(c);
  pipeline::validate_against(c, data);
  for (Date d : days_of(c, date)) {
    if (c.precision == "float")
      train_and_save<float>(c, data, d, head, out);
    else
      train_and_save<double>(c, data, d, head, out);
    progress(o, nnet::to_string(head) + " " + format_date(d));
  }
  return 0;
}

int cmd_predict(const Overrides& o, const std::string& date, const std::string& models, const std::string& out) {
  using pipeline::Method;
  const auto c = load(o);
  const auto data = pipeline::load_dataset(c);
  pipeline::validate_against(c, data);
  std::vector<emos::StoredFit> store;
  if (c.wants(Method::Emos) || c.wants(Method::EmosQ))
    store = emos::read_store((fs::path(models) / "emos_store.csv").string());

  std::vector<pipeline::Prediction> all;
  for (Date d : days_of(c, date)) {
    const auto targets = pipeline::forecasts_on(data.forecasts, d);
    if (c.wants(Method::Raw))
      for (const auto& t : targets) {
        pipeline::Prediction p;
        p.method = Method::Raw;
        p.station_id = t.station_id;
        p.init_time = t.init_time;
        p.lead_h = t.lead_h;
        p.members = t.members;
        std::sort(p.members.begin(), p.members.end());
        all.push_back(p);
      }
    if (c.wants(Method::Emos) || c.wants(Method::EmosQ))
      for (auto p : pipeline::predict_emos(store, targets, c.emos.fit, d)) {
        if (c.wants(Method::Emos)) all.push_back(p);
        if (c.wants(Method::EmosQ)) {
          p.method = Method::EmosQ;
          p.members = pipeline::quantile_members(p.law);
          all.push_back(p);
        }
      }
    for (auto head : {nnet::Head::Distribution, nnet::Head::Members}) {
      const bool drn = head == nnet::Head::Distribution;
      if (drn ? !(c.wants(Method::Drn) || c.wants(Method::DrnQ)) : !c.wants(Method::Corrected)) continue;
      const auto preds = c.precision == "float" ? load_and_predict<float>(c, data, d, head, models, targets)
                                                : load_and_predict<double>(c, data, d, head, models, targets);
      for (const auto& p : preds)
        if (c.wants(p.method)) all.push_back(p);
    }
    progress(o, "predicted " + format_date(d));
  }
  ensure_dir(out);
  auto f = open_out(fs::path(out) / "predictions.csv");
  pipeline::write_predictions(f, all);
  return 0;
}

int cmd_verify(const Overrides& o, const std::string& predictions, const std::string& out) {
  const auto c = load(o);
  const auto data = pipeline::load_dataset(c);
  const auto preds = pipeline::read_predictions(predictions);
  const auto cases = report::verification_cases(c, data.pairs.cases);
  const auto days = static_cast<std::size_t>((c.verification_end - c.verification_start).count() + 1);
  const auto rep = report::verify(c, preds, cases, days);
  ensure_dir(out);
  auto f = open_out(fs::path(out) / "summary.json");
  f << report::to_json(rep).dump(2) << '\n';
  return finish(rep);
}

int cmd_report(const std::string& summary, const std::string& out) {
  std::ifstream in(summary);
  if (!in) throw DataError("cannot open report '" + summary + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(summary + ": " + e.what());
  }
  report::render(report::from_json(doc), out);
  return 0;
}

int cmd_run(const Overrides& o, const std::string& out) {
  const auto c = load(o);
  const auto data = pipeline::load_dataset(c);
  if (data.dropped_rows > 0) progress(o, "dropped " + std::to_string(data.dropped_rows) + " incomplete rows");
  const auto result = report::run_experiment(c, data, [&](const pipeline::DayOutcome& d) {
    progress(o, "day " + format_date(d.day) + ": " + std::to_string(d.predictions.size()) + " predictions" +
                    (d.failures.empty() ? "" : ", " + std::to_string(d.failures.size()) + " failures"));
  });
  ensure_dir(out);
  auto f = open_out(fs::path(out) / "predictions.csv");
  pipeline::write_predictions(f, result.predictions);
  report::render(result.report, out);
  return finish(result.report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"solarcal: calibrate and verify irradiance ensemble forecasts"};
  app.require_subcommand(1);
  Overrides o;
  std::string out = "out", date, models, predictions, summary;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic station/forecast/observation set");
  add_common(synth_cmd, o, false);
  synth_cmd->add_option("--out", out, "Output directory");

  auto* emos_cmd = app.add_subcommand("train-emos", "Fit semi-local EMOS and append to the coefficient store");
  auto* drn_cmd = app.add_subcommand("train-drn", "Train distributional network runs");
  auto* corr_cmd = app.add_subcommand("train-corrected", "Train corrected-ensemble network runs");
  for (auto* cmd : {emos_cmd, drn_cmd, corr_cmd}) {
    add_common(cmd, o);
    cmd->add_option("--date", date, "Single verification day (default: whole period)");
    cmd->add_option("--out", out, "Model directory");
  }

  auto* predict_cmd = app.add_subcommand("predict", "Predict from stored models");
  add_common(predict_cmd, o);
  predict_cmd->add_option("--date", date, "Single verification day (default: whole period)");
  predict_cmd->add_option("--models", models, "Model directory")->required();
  predict_cmd->add_option("--out", out, "Output directory");

  auto* verify_cmd = app.add_subcommand("verify", "Score predictions and write summary.json");
  add_common(verify_cmd, o);
  verify_cmd->add_option("--predictions", predictions, "predictions.csv")->required();
  verify_cmd->add_option("--out", out, "Output directory");

  auto* report_cmd = app.add_subcommand("report", "Render tables from summary.json");
  report_cmd->add_option("--report", summary, "summary.json")->required();
  report_cmd->add_option("--out", out, "Output directory");

  auto* run_cmd = app.add_subcommand("run", "Fit, predict, verify and render in one pass");
  add_common(run_cmd, o);
  run_cmd->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (emos_cmd->parsed()) return cmd_train_emos(o, date, out);
    if (drn_cmd->parsed()) return cmd_train_net(o, date, out, nnet::Head::Distribution);
    if (corr_cmd->parsed()) return cmd_train_net(o, date, out, nnet::Head::Members);
    if (predict_cmd->parsed()) return cmd_predict(o, date, models, out);
    if (verify_cmd->parsed()) return cmd_verify(o, predictions, out);
    if (report_cmd->parsed()) return cmd_report(summary, out);
    if (run_cmd->parsed()) return cmd_run(o, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
