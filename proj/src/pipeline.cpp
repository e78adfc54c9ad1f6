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

#include "solarcal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "csv.hpp"
#include "solarcal/error.hpp"
#include "solarcal/rng.hpp"

namespace solarcal::pipeline {

std::string to_string(Method m) {
  switch (m) {
    case Method::Raw: return "raw";
    case Method::Emos: return "emos";
    case Method::EmosQ: return "emos_q";
    case Method::Drn: return "drn";
    case Method::DrnQ: return "drn_q";
    case Method::Corrected: return "corrected";
  }
  return "raw";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::Raw, Method::Emos, Method::EmosQ, Method::Drn, Method::DrnQ, Method::Corrected})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + name + "' (expected raw, emos, emos_q, drn, drn_q, corrected)");
}

std::vector<Method> parse_methods(const std::string& comma_list) {
  std::vector<Method> out;
  for (const auto& part : csv::split(comma_list)) {
    const auto name = csv::trim(part);
    if (name.empty()) continue;
    const Method m = method_from_string(std::string(name));
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("method list is empty");
  std::sort(out.begin(), out.end());
  return out;
}

std::string LeadRange::label() const { return std::to_string(first) + "-" + std::to_string(last); }

LeadRange LeadRange::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("lead range '" + text + "' must be a:b");
  const auto a = csv::parse_int(text.substr(0, colon));
  const auto b = csv::parse_int(text.substr(colon + 1));
  if (!a || !b || *a < 1 || *b > kMaxLead || *a > *b)
    throw ConfigError("lead range '" + text + "' must satisfy 1 <= a <= b <= 48");
  return {*a, *b};
}

int ExperimentConfig::max_window_days() const {
  int w = 0;
  if (wants(Method::Emos) || wants(Method::EmosQ)) w = std::max(w, emos.window_days);
  if (wants(Method::Drn) || wants(Method::DrnQ)) w = std::max(w, drn_window_days);
  if (wants(Method::Corrected)) w = std::max(w, corrected_window_days);
  return w;
}

bool ExperimentConfig::wants(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

bool ExperimentConfig::is_low_signal(int lead) const {
  return std::any_of(low_signal.begin(), low_signal.end(), [&](const LeadRange& r) { return r.contains(lead); });
}

bool ExperimentConfig::is_midday(int lead) const {
  return std::any_of(midday.begin(), midday.end(), [&](const LeadRange& r) { return r.contains(lead); });
}

void ExperimentConfig::validate() const {
  if (!synthetic && (stations_path.empty() || forecasts_path.empty() || observations_path.empty()))
    throw ConfigError("config: data paths (stations, forecasts, observations) or a synthetic block are required");
  if (verification_end < verification_start) throw ConfigError("config: verification end precedes start");
  if (methods.empty()) throw ConfigError("config: no methods selected");
  if (emos.window_days < 1 || drn_window_days < 1 || corrected_window_days < 1)
    throw ConfigError("config: window lengths must be positive");
  if (emos.clusters < 1 || emos.min_per_cluster < 1 || emos.feature_quantiles < 1)
    throw ConfigError("config: cluster settings must be positive");
  if (precision != "double" && precision != "float") throw ConfigError("config: precision must be double or float");
  if (!(interval_alpha > 0 && interval_alpha < 1)) throw ConfigError("config: interval_alpha must lie in (0,1)");
  if (pit_bins < 1) throw ConfigError("config: pit_bins must be positive");
  if (!(min_obs >= 0)) throw ConfigError("config: min_obs must be >= 0");
  if (bootstrap_options.replicates < 1 || !(bootstrap_options.level > 0 && bootstrap_options.level < 1) ||
      !(bootstrap_options.block_constant > 0))
    throw ConfigError("config: invalid bootstrap settings");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (drn.head != nnet::Head::Distribution) throw ConfigError("config: drn network must use the distribution head");
  if (corrected.head != nnet::Head::Members) throw ConfigError("config: corrected network must use the members head");
  try {
    drn.validate();
    corrected.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (synthetic) synthetic->validate();
}

// Configuration document.

namespace {

using nlohmann::json;

Date parse_date_field(const json& j, const std::string& key) {
  const auto d = try_parse_date(j.at(key).get<std::string>());
  if (!d) throw ConfigError("config: '" + key + "' is not a YYYY-MM-DD date");
  return *d;
}

std::vector<LeadRange> ranges_from(const json& j) {
  std::vector<LeadRange> out;
  for (const auto& r : j) out.push_back(LeadRange::parse(r.get<std::string>()));
  return out;
}

json ranges_to(const std::vector<LeadRange>& ranges) {
  json a = json::array();
  for (const auto& r : ranges) a.push_back(std::to_string(r.first) + ":" + std::to_string(r.last));
  return a;
}

template <typename T>
void read_opt(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

void read_network(const json& j, nnet::MlpConfig& c) {
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "adam_epsilon", c.adam_epsilon);
  read_opt(j, "max_epochs", c.max_epochs);
  read_opt(j, "validation_fraction", c.validation_fraction);
  read_opt(j, "patience", c.patience);
  read_opt(j, "runs", c.runs);
  read_opt(j, "target_scale", c.target_scale);
}

json write_network(const nnet::MlpConfig& c) {
  return json{{"hidden", c.hidden},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"max_epochs", c.max_epochs},
              {"validation_fraction", c.validation_fraction},
              {"patience", c.patience},
              {"runs", c.runs},
              {"target_scale", c.target_scale}};
}

synth::SyntheticSpec read_synthetic(const json& j) {
  synth::SyntheticSpec s;
  read_opt(j, "stations", s.stations);
  read_opt(j, "days", s.days);
  if (j.contains("start_date")) s.start_date = parse_date_field(j, "start_date");
  read_opt(j, "peak_wm2", s.peak_wm2);
  read_opt(j, "sunrise_utc", s.sunrise_utc);
  read_opt(j, "sunset_utc", s.sunset_utc);
  read_opt(j, "seasonal_amplitude", s.seasonal_amplitude);
  read_opt(j, "attenuation_min", s.attenuation_min);
  read_opt(j, "attenuation_ar", s.attenuation_ar);
  read_opt(j, "regime_offset", s.regime_offset);
  read_opt(j, "noise_scale", s.noise_scale);
  read_opt(j, "center_error", s.center_error);
  read_opt(j, "bias", s.bias);
  read_opt(j, "bias_spread", s.bias_spread);
  read_opt(j, "dispersion", s.dispersion);
  read_opt(j, "seed", s.seed);
  return s;
}

json write_synthetic(const synth::SyntheticSpec& s) {
  return json{{"stations", s.stations},
              {"days", s.days},
              {"start_date", format_date(s.start_date)},
              {"peak_wm2", s.peak_wm2},
              {"sunrise_utc", s.sunrise_utc},
              {"sunset_utc", s.sunset_utc},
              {"seasonal_amplitude", s.seasonal_amplitude},
              {"attenuation_min", s.attenuation_min},
              {"attenuation_ar", s.attenuation_ar},
              {"regime_offset", s.regime_offset},
              {"noise_scale", s.noise_scale},
              {"center_error", s.center_error},
              {"bias", s.bias},
              {"bias_spread", s.bias_spread},
              {"dispersion", s.dispersion},
              {"seed", s.seed}};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  try {
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      read_opt(d, "stations", c.stations_path);
      read_opt(d, "forecasts", c.forecasts_path);
      read_opt(d, "observations", c.observations_path);
      read_opt(d, "lax", c.lax);
    }
    if (doc.contains("synthetic")) c.synthetic = read_synthetic(doc.at("synthetic"));

    const auto& v = doc.at("verification");
    c.verification_start = parse_date_field(v, "start");
    c.verification_end = parse_date_field(v, "end");

    if (doc.contains("methods")) {
      std::string list;
      for (const auto& m : doc.at("methods")) list += m.get<std::string>() + ",";
      c.methods = parse_methods(list);
    }

    if (doc.contains("emos")) {
      const auto& e = doc.at("emos");
      read_opt(e, "window_days", c.emos.window_days);
      read_opt(e, "clusters", c.emos.clusters);
      read_opt(e, "min_per_cluster", c.emos.min_per_cluster);
      read_opt(e, "feature_quantiles", c.emos.feature_quantiles);
      read_opt(e, "sd_floor", c.emos.fit.sd_floor);
      read_opt(e, "sigma_floor", c.emos.fit.sigma_floor);
      read_opt(e, "min_training_cases", c.emos.fit.min_training_cases);
      read_opt(e, "max_iterations", c.emos.fit.bfgs.max_iterations);
      read_opt(e, "gradient_tolerance", c.emos.fit.bfgs.gradient_tolerance);
    }

    c.drn.head = nnet::Head::Distribution;
    c.corrected.head = nnet::Head::Members;
    if (doc.contains("network")) {
      read_network(doc.at("network"), c.drn);
      read_network(doc.at("network"), c.corrected);
    }
    if (doc.contains("drn")) {
      const auto& d = doc.at("drn");
      read_network(d, c.drn);
      read_opt(d, "window_days", c.drn_window_days);
    }
    if (doc.contains("corrected")) {
      const auto& d = doc.at("corrected");
      read_network(d, c.corrected);
      read_opt(d, "window_days", c.corrected_window_days);
    }
    read_opt(doc, "precision", c.precision);

    if (doc.contains("scoring")) {
      const auto& s = doc.at("scoring");
      if (s.contains("lead_sets")) c.lead_sets = ranges_from(s.at("lead_sets"));
      if (s.contains("midday")) c.midday = ranges_from(s.at("midday"));
      if (s.contains("low_signal")) c.low_signal = ranges_from(s.at("low_signal"));
      read_opt(s, "min_obs", c.min_obs);
      read_opt(s, "interval_alpha", c.interval_alpha);
      read_opt(s, "pit_bins", c.pit_bins);
    }
    if (doc.contains("bootstrap")) {
      const auto& b = doc.at("bootstrap");
      read_opt(b, "enabled", c.bootstrap);
      read_opt(b, "level", c.bootstrap_options.level);
      read_opt(b, "replicates", c.bootstrap_options.replicates);
      read_opt(b, "block_constant", c.bootstrap_options.block_constant);
    }
    read_opt(doc, "seed", c.seed);
    read_opt(doc, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["data"] = {{"stations", c.stations_path},
                 {"forecasts", c.forecasts_path},
                 {"observations", c.observations_path},
                 {"lax", c.lax}};
  if (c.synthetic) doc["synthetic"] = write_synthetic(*c.synthetic);
  doc["verification"] = {{"start", format_date(c.verification_start)}, {"end", format_date(c.verification_end)}};
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  doc["methods"] = methods;
  doc["emos"] = {{"window_days", c.emos.window_days},
                 {"clusters", c.emos.clusters},
                 {"min_per_cluster", c.emos.min_per_cluster},
                 {"feature_quantiles", c.emos.feature_quantiles},
                 {"sd_floor", c.emos.fit.sd_floor},
                 {"sigma_floor", c.emos.fit.sigma_floor},
                 {"min_training_cases", c.emos.fit.min_training_cases},
                 {"max_iterations", c.emos.fit.bfgs.max_iterations},
                 {"gradient_tolerance", c.emos.fit.bfgs.gradient_tolerance}};
  doc["drn"] = write_network(c.drn);
  doc["drn"]["window_days"] = c.drn_window_days;
  doc["corrected"] = write_network(c.corrected);
  doc["corrected"]["window_days"] = c.corrected_window_days;
  doc["precision"] = c.precision;
  doc["scoring"] = {{"lead_sets", ranges_to(c.lead_sets)},
                    {"midday", ranges_to(c.midday)},
                    {"low_signal", ranges_to(c.low_signal)},
                    {"min_obs", c.min_obs},
                    {"interval_alpha", c.interval_alpha},
                    {"pit_bins", c.pit_bins}};
  doc["bootstrap"] = {{"enabled", c.bootstrap},
                      {"level", c.bootstrap_options.level},
                      {"replicates", c.bootstrap_options.replicates},
                      {"block_constant", c.bootstrap_options.block_constant}};
  doc["seed"] = c.seed;
  doc["threads"] = c.threads;
  return doc;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(doc);
}

// Data.

std::map<int, Station> Dataset::station_map() const {
  std::map<int, Station> out;
  for (const auto& s : stations) out[s.id] = s;
  return out;
}

Date Dataset::first_date() const {
  if (forecasts.empty()) throw DataError("dataset has no forecasts");
  auto t = forecasts.front().init_time;
  for (const auto& f : forecasts) t = std::min(t, f.init_time);
  return date_of(t);
}

Date Dataset::last_date() const {
  if (forecasts.empty()) throw DataError("dataset has no forecasts");
  auto t = forecasts.front().init_time;
  for (const auto& f : forecasts) t = std::max(t, f.init_time);
  return date_of(t);
}

Dataset load_dataset(const ExperimentConfig& config) {
  Dataset d;
  if (config.synthetic) {
    auto s = synth::generate(*config.synthetic);
    d.stations = std::move(s.stations);
    d.forecasts = std::move(s.forecasts);
    d.observations = std::move(s.observations);
  } else {
    const ReadOptions opts{config.lax};
    auto st = load_stations(config.stations_path, opts);
    auto fc = load_forecasts(config.forecasts_path, opts);
    auto ob = load_observations(config.observations_path, opts);
    d.stations = std::move(st.rows);
    d.forecasts = std::move(fc.rows);
    d.observations = std::move(ob.rows);
    d.dropped_rows = st.dropped + fc.dropped + ob.dropped;
  }
  const auto stations = d.station_map();
  for (const auto& f : d.forecasts)
    if (!stations.count(f.station_id))
      throw DataError("forecast references unknown station " + std::to_string(f.station_id));
  d.pairs = pair_cases(d.forecasts, d.observations);
  return d;
}

void validate_against(const ExperimentConfig& config, const Dataset& data) {
  const Date first = data.first_date();
  const Date earliest = first + std::chrono::days(config.max_window_days());
  if (config.verification_start < earliest)
    throw ConfigError("config: verification start " + format_date(config.verification_start) +
                      " precedes first data date " + format_date(first) + " plus the longest window (" +
                      std::to_string(config.max_window_days()) + " days); earliest allowed is " +
                      format_date(earliest));
  if (config.verification_end > data.last_date())
    throw ConfigError("config: verification end " + format_date(config.verification_end) +
                      " is after the last forecast date " + format_date(data.last_date()));
}

// Predictions file.

namespace {

const char* kPredictionHeader = "method,station_id,init_time,lead_h,mu,sigma,m1,m2,m3,m4,m5,m6,m7,m8";

}  // namespace

void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  out << kPredictionHeader << '\n';
  for (const auto& p : predictions) {
    out << to_string(p.method) << ',' << p.station_id << ',' << format_utc(p.init_time) << ',' << p.lead_h;
    if (is_distribution(p.method)) {
      out << ',' << csv::format_double(p.law.mu) << ',' << csv::format_double(p.law.sigma);
      for (int k = 0; k < kMembers; ++k) out << ',';
    } else {
      out << ",,";
      for (double m : p.members) out << ',' << csv::format_double(m);
    }
    out << '\n';
  }
}

std::vector<Prediction> read_predictions(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != kPredictionHeader)
    throw DataError(source + ": not a predictions file (bad header)");
  std::vector<Prediction> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    auto bad = [&](const std::string& what) { return DataError(source + ":" + std::to_string(lineno) + ": " + what); };
    const auto f = csv::split(line);
    if (f.size() != 14) throw bad("expected 14 fields");
    Prediction p;
    try {
      p.method = method_from_string(f[0]);
    } catch (const ConfigError& e) {
      throw bad(e.what());
    }
    const auto id = csv::parse_int(f[1]);
    const auto t = try_parse_utc(f[2]);
    const auto lead = csv::parse_int(f[3]);
    if (!id || !t || !lead || *lead < 1 || *lead > kMaxLead) throw bad("bad key fields");
    p.station_id = *id;
    p.init_time = *t;
    p.lead_h = *lead;
    if (is_distribution(p.method)) {
      const auto mu = csv::parse_double(f[4]);
      const auto sigma = csv::parse_double(f[5]);
      if (!mu || !sigma || !std::isfinite(*mu) || !(*sigma > 0) || !std::isfinite(*sigma))
        throw bad("bad distribution parameters");
      p.law = {*mu, *sigma};
    } else {
      for (int k = 0; k < kMembers; ++k) {
        const auto m = csv::parse_double(f[static_cast<std::size_t>(6 + k)]);
        if (!m || !std::isfinite(*m) || *m < 0) throw bad("bad member value");
        p.members[static_cast<std::size_t>(k)] = *m;
      }
      std::sort(p.members.begin(), p.members.end());
    }
    out.push_back(p);
  }
  return out;
}

std::vector<Prediction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions '" + path + "'");
  return read_predictions(in, path);
}

// Windows.

std::vector<PairedCase> training_window(std::span<const PairedCase> cases, Date day, int window_days) {
  auto out = select_window(cases, RollingWindow{day, window_days});
  audit_no_leakage(out, day);
  return out;
}

void audit_no_leakage(std::span<const PairedCase> training, Date day) {
  for (const auto& c : training)
    if (c.init_time >= midnight(day))
      throw std::logic_error("training case initialized " + format_utc(c.init_time) +
                             " is not before verification day " + format_date(day));
}

std::vector<ForecastRecord> forecasts_on(std::span<const ForecastRecord> forecasts, Date day) {
  std::vector<ForecastRecord> out;
  for (const auto& f : forecasts)
    if (date_of(f.init_time) == day) out.push_back(f);
  std::sort(out.begin(), out.end(), [](const ForecastRecord& a, const ForecastRecord& b) {
    return std::tie(a.init_time, a.station_id, a.lead_h) < std::tie(b.init_time, b.station_id, b.lead_h);
  });
  return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(threads, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::int64_t day_key(Date d) { return d.time_since_epoch().count(); }

}  // namespace

// EMOS.

std::vector<emos::SemilocalResult> fit_emos_day(const ExperimentConfig& config, const Dataset& data, Date day) {
  const auto pool = training_window(data.pairs.cases, day, config.emos.window_days);
  const auto targets = forecasts_on(data.forecasts, day);
  std::vector<emos::SemilocalResult> out(static_cast<std::size_t>(kMaxLead));
  parallel_for(kMaxLead, config.threads, [&](int i) {
    const int lead = i + 1;
    std::map<int, EnsembleStats> stats;
    for (const auto& f : targets)
      if (f.lead_h == lead) stats[f.station_id] = ensemble_stats(f.members);
    Rng rng = substream(config.seed, "emos.kmeans", {day_key(day), lead});
    out[static_cast<std::size_t>(i)] = emos::run_semilocal(pool, stats, day, lead, config.emos, rng);
  });
  return out;
}

std::vector<Prediction> predict_emos(std::span<const emos::StoredFit> fits, std::span<const ForecastRecord> targets,
                                     const emos::Options& opts, Date day) {
  std::map<std::pair<int, int>, const emos::StoredFit*> by_station_lead;
  for (const auto& f : fits) {
    if (f.target_date != day) continue;
    for (int id : f.stations) by_station_lead[{id, f.lead_h}] = &f;
  }
  std::vector<Prediction> out;
  for (const auto& t : targets) {
    auto it = by_station_lead.find({t.station_id, t.lead_h});
    if (it == by_station_lead.end())
      throw DataError("no EMOS coefficients for station " + std::to_string(t.station_id) + " lead " +
                      std::to_string(t.lead_h) + " on " + format_date(day));
    Prediction p;
    p.method = Method::Emos;
    p.station_id = t.station_id;
    p.init_time = t.init_time;
    p.lead_h = t.lead_h;
    p.law = emos::predict(it->second->coefficients, ensemble_stats(t.members), opts);
    out.push_back(p);
  }
  return out;
}

Members quantile_members(const cn0::ParamsD& law) {
  const auto q = cn0::quantile_ensemble(law, kMembers);
  Members m{};
  for (int k = 0; k < kMembers; ++k) m[static_cast<std::size_t>(k)] = q[k];
  return m;
}

// Networks.

template <typename Scalar>
std::vector<nnet::Model<Scalar>> train_networks_day(const ExperimentConfig& config, const Dataset& data, Date day,
                                                    nnet::Head head) {
  const bool drn = head == nnet::Head::Distribution;
  const auto& net_config = drn ? config.drn : config.corrected;
  const int window = drn ? config.drn_window_days : config.corrected_window_days;
  const auto training = training_window(data.pairs.cases, day, window);
  if (training.empty()) throw DataError("no training cases before " + format_date(day));
  const auto stations = data.station_map();
  const Eigen::MatrixXd x = nnet::feature_matrix(training, stations);
  std::vector<double> y(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) y[i] = training[i].obs;

  std::vector<nnet::Model<Scalar>> runs(static_cast<std::size_t>(net_config.runs));
  const char* stream = drn ? "drn.train" : "corrected.train";
  parallel_for(net_config.runs, config.threads, [&](int r) {
    Rng rng = substream(config.seed, stream, {day_key(day), r});
    runs[static_cast<std::size_t>(r)] = nnet::train<Scalar>(net_config, x, y, rng).model;
  });
  return runs;
}

template std::vector<nnet::Model<double>> train_networks_day<double>(const ExperimentConfig&, const Dataset&, Date,
                                                                     nnet::Head);
template std::vector<nnet::Model<float>> train_networks_day<float>(const ExperimentConfig&, const Dataset&, Date,
                                                                   nnet::Head);

template <typename Scalar>
std::vector<Prediction> predict_networks(std::span<const nnet::Model<Scalar>> runs,
                                         std::span<const ForecastRecord> targets,
                                         const std::map<int, Station>& stations, bool with_quantile_variant) {
  std::vector<Prediction> out;
  if (runs.empty() || targets.empty()) return out;
  Eigen::MatrixXd x(nnet::kInputDim, static_cast<Eigen::Index>(targets.size()));
  for (std::size_t j = 0; j < targets.size(); ++j) {
    auto it = stations.find(targets[j].station_id);
    if (it == stations.end()) throw DataError("unknown station " + std::to_string(targets[j].station_id));
    x.col(static_cast<Eigen::Index>(j)) = nnet::feature_row(targets[j], it->second);
  }
  const bool drn = runs.front().config.head == nnet::Head::Distribution;
  auto key = [&](Prediction& p, std::size_t j) {
    p.station_id = targets[j].station_id;
    p.init_time = targets[j].init_time;
    p.lead_h = targets[j].lead_h;
  };
  if (drn) {
    std::vector<std::vector<cn0::ParamsD>> per_run;
    for (const auto& m : runs) per_run.push_back(m.predict_distribution(x));
    for (std::size_t j = 0; j < targets.size(); ++j) {
      std::vector<cn0::ParamsD> laws;
      for (const auto& r : per_run) laws.push_back(r[j]);
      Prediction p;
      key(p, j);
      p.method = Method::Drn;
      p.law = nnet::aggregate_distribution(laws);
      out.push_back(p);
      if (with_quantile_variant) {
        Prediction q = p;
        q.method = Method::DrnQ;
        q.members = quantile_members(p.law);
        out.push_back(q);
      }
    }
  } else {
    std::vector<std::vector<std::vector<double>>> per_run;
    for (const auto& m : runs) per_run.push_back(m.predict_members(x));
    for (std::size_t j = 0; j < targets.size(); ++j) {
      std::vector<std::vector<double>> sets;
      for (const auto& r : per_run) sets.push_back(r[j]);
      const auto agg = nnet::aggregate_members(sets);
      if (agg.size() != static_cast<std::size_t>(kMembers))
        throw NumericalError("corrected network must emit 8 members for pipeline scoring");
      Prediction p;
      key(p, j);
      p.method = Method::Corrected;
      std::copy(agg.begin(), agg.end(), p.members.begin());
      std::sort(p.members.begin(), p.members.end());
      out.push_back(p);
    }
  }
  return out;
}

template std::vector<Prediction> predict_networks<double>(std::span<const nnet::Model<double>>,
                                                          std::span<const ForecastRecord>,
                                                          const std::map<int, Station>&, bool);
template std::vector<Prediction> predict_networks<float>(std::span<const nnet::Model<float>>,
                                                         std::span<const ForecastRecord>,
                                                         const std::map<int, Station>&, bool);

// One verification day.

namespace {

template <typename Scalar>
void predict_networks_day(const ExperimentConfig& config, const Dataset& data, Date day, nnet::Head head,
                          std::span<const ForecastRecord> targets, DayOutcome& out) {
  const auto runs = train_networks_day<Scalar>(config, data, day, head);
  const bool drn = head == nnet::Head::Distribution;
  auto preds = predict_networks<Scalar>(runs, targets, data.station_map(), drn && config.wants(Method::DrnQ));
  for (auto& p : preds)
    if (config.wants(p.method)) out.predictions.push_back(p);
}

}  // namespace

DayOutcome predict_day(const ExperimentConfig& config, const Dataset& data, Date day) {
  DayOutcome out;
  out.day = day;
  const auto targets = forecasts_on(data.forecasts, day);

  if (config.wants(Method::Raw)) {
    for (const auto& t : targets) {
      Prediction p;
      p.method = Method::Raw;
      p.station_id = t.station_id;
      p.init_time = t.init_time;
      p.lead_h = t.lead_h;
      p.members = t.members;
      std::sort(p.members.begin(), p.members.end());
      out.predictions.push_back(p);
    }
  }

  auto attempt = [&](const std::string& label, const std::function<void()>& body) {
    try {
      body();
    } catch (const Error& e) {
      out.failures.push_back(format_date(day) + " " + label + ": " + e.what());
    }
  };

  if (config.wants(Method::Emos) || config.wants(Method::EmosQ)) {
    attempt("emos", [&] {
      const auto fits = fit_emos_day(config, data, day);
      for (const auto& t : targets) {
        const auto& r = fits[static_cast<std::size_t>(t.lead_h - 1)];
        Prediction p;
        p.method = Method::Emos;
        p.station_id = t.station_id;
        p.init_time = t.init_time;
        p.lead_h = t.lead_h;
        p.law = r.predictions.at(t.station_id);
        if (config.wants(Method::Emos)) out.predictions.push_back(p);
        if (config.wants(Method::EmosQ)) {
          Prediction q = p;
          q.method = Method::EmosQ;
          q.members = quantile_members(p.law);
          out.predictions.push_back(q);
        }
      }
    });
  }

  const bool single = config.precision == "float";
  if (config.wants(Method::Drn) || config.wants(Method::DrnQ)) {
    attempt("drn", [&] {
      if (single)
        predict_networks_day<float>(config, data, day, nnet::Head::Distribution, targets, out);
      else
        predict_networks_day<double>(config, data, day, nnet::Head::Distribution, targets, out);
    });
  }
  if (config.wants(Method::Corrected)) {
    attempt("corrected", [&] {
      if (single)
        predict_networks_day<float>(config, data, day, nnet::Head::Members, targets, out);
      else
        predict_networks_day<double>(config, data, day, nnet::Head::Members, targets, out);
    });
  }
  return out;
}

}  // namespace solarcal::pipeline
