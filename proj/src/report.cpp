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

#include "solarcal/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <tuple>

#include "csv.hpp"
#include "solarcal/error.hpp"
#include "solarcal/rng.hpp"

namespace solarcal::report {

using nlohmann::json;
using pipeline::LeadRange;

namespace {

using Key = std::tuple<int, std::int64_t, int>;  // station, init seconds, lead

Key key_of(int station, TimePoint init, int lead) { return {station, init.time_since_epoch().count(), lead}; }

std::int64_t method_key(Method m) { return static_cast<std::int64_t>(m); }

}  // namespace

std::vector<Prediction> raw_predictions(std::span<const PairedCase> cases) {
  std::vector<Prediction> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    Prediction p;
    p.method = Method::Raw;
    p.station_id = c.station_id;
    p.init_time = c.init_time;
    p.lead_h = c.lead_h;
    p.members = c.members;
    std::sort(p.members.begin(), p.members.end());
    out.push_back(p);
  }
  return out;
}

std::vector<CaseScore> score_cases(const ExperimentConfig& config, Method method,
                                   std::span<const Prediction> predictions, std::span<const PairedCase> cases) {
  std::map<Key, const Prediction*> by_key;
  for (const auto& p : predictions)
    if (p.method == method) by_key[key_of(p.station_id, p.init_time, p.lead_h)] = &p;

  std::vector<CaseScore> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    auto it = by_key.find(key_of(c.station_id, c.init_time, c.lead_h));
    if (it == by_key.end()) continue;
    const Prediction& p = *it->second;
    Rng rng = substream(config.seed, "verify.randomization",
                        {method_key(method), c.station_id, c.init_time.time_since_epoch().count(), c.lead_h});
    CaseScore s;
    s.station_id = c.station_id;
    s.init_time = c.init_time;
    s.lead_h = c.lead_h;
    s.obs = c.obs;
    if (pipeline::is_distribution(method)) {
      s.crps = cn0::crps(p.law, c.obs);
      s.median = cn0::quantile(p.law, 0.5);
      s.interval = scoring::central_interval(p.law, config.interval_alpha);
      s.pit = cn0::pit(p.law, c.obs, uniform01(rng));
    } else {
      s.crps = scoring::crps_ensemble<double>(p.members, c.obs);
      s.median = scoring::ensemble_median(p.members);
      s.interval = scoring::ensemble_range(p.members);
      s.rank = scoring::verification_rank(p.members, c.obs, rng);
    }
    out.push_back(s);
  }
  return out;
}

std::string lead_set_label(std::span<const LeadRange> ranges) {
  std::string out;
  for (const auto& r : ranges) out += (out.empty() ? "" : "+") + r.label();
  return out;
}

const MethodReport* VerificationReport::find(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return &r;
  return nullptr;
}

namespace {

struct Accumulated {
  std::size_t n = 0;
  double crps = 0;
  double mae = 0;
  scoring::CoverageWidth coverage;
};

Accumulated accumulate(const std::vector<const CaseScore*>& scores) {
  Accumulated a;
  a.n = scores.size();
  if (scores.empty()) return a;
  std::vector<double> med, obs;
  std::vector<scoring::Interval> iv;
  for (const auto* s : scores) {
    a.crps += s->crps;
    med.push_back(s->median);
    obs.push_back(s->obs);
    iv.push_back(s->interval);
  }
  a.crps /= static_cast<double>(scores.size());
  a.mae = scoring::mean_absolute_error(med, obs);
  a.coverage = scoring::coverage_and_width(iv, obs);
  return a;
}

/// Skill against raw with a bootstrap interval over daily CRPS totals, so the
/// point estimate equals the case-level skill.
void skill(const ExperimentConfig& config, const std::vector<const CaseScore*>& scores,
           const std::map<Key, const CaseScore*>& raw, std::int64_t stream_key, Method method,
           std::optional<double>& crpss, std::optional<scoring::BootstrapCI>& ci) {
  std::map<std::int64_t, std::pair<double, double>> daily;  // init seconds -> (forecast, raw)
  for (const auto* s : scores) {
    auto it = raw.find(key_of(s->station_id, s->init_time, s->lead_h));
    if (it == raw.end()) continue;
    auto& d = daily[s->init_time.time_since_epoch().count()];
    d.first += s->crps;
    d.second += it->second->crps;
  }
  double f = 0, r = 0;
  std::vector<double> fs, rs;
  for (const auto& [day, v] : daily) {
    f += v.first;
    r += v.second;
    fs.push_back(v.first);
    rs.push_back(v.second);
  }
  if (!(r > 0)) return;
  crpss = 1.0 - f / r;
  if (config.bootstrap && fs.size() >= scoring::kMinBootstrapLength) {
    Rng rng = substream(config.seed, "verify.bootstrap", {method_key(method), stream_key});
    ci = scoring::bootstrap_crpss_ci(fs, rs, config.bootstrap_options, rng);
  }
}

HistogramSummary histogram_for(const ExperimentConfig& config, Method method,
                               const std::vector<const CaseScore*>& scores, const std::string& label) {
  HistogramSummary h;
  h.lead_set = label;
  if (pipeline::is_distribution(method)) {
    h.kind = "pit";
    std::vector<double> pit;
    for (const auto* s : scores) pit.push_back(s->pit);
    h.histogram = scoring::pit_histogram(pit, config.pit_bins);
  } else {
    h.kind = "rank";
    std::vector<int> ranks;
    for (const auto* s : scores) ranks.push_back(s->rank);
    h.histogram = scoring::rank_histogram(ranks, kMembers);
  }
  h.reliability_index = h.histogram.total > 0 ? scoring::reliability_index(h.histogram) : 0.0;
  return h;
}

}  // namespace

VerificationReport verify(const ExperimentConfig& config, std::span<const Prediction> predictions,
                          std::span<const PairedCase> cases, std::size_t verification_days,
                          std::vector<std::string> failures) {
  VerificationReport rep;
  rep.seed = config.seed;
  rep.config = pipeline::config_to_json(config);
  rep.verification_days = verification_days;
  rep.cases = cases.size();
  rep.bootstrap = config.bootstrap;
  rep.nominal_coverage_pct = 100.0 * scoring::nominal_range_coverage(kMembers);
  rep.failures = std::move(failures);

  const auto raw_preds = raw_predictions(cases);
  const auto raw_scores = score_cases(config, Method::Raw, raw_preds, cases);
  std::map<Key, const CaseScore*> raw_index;
  for (const auto& s : raw_scores) raw_index[key_of(s.station_id, s.init_time, s.lead_h)] = &s;

  // Pooled sets: midday union first, then each configured lead set.
  std::vector<std::pair<std::string, std::vector<LeadRange>>> sets;
  sets.push_back({lead_set_label(config.midday), config.midday});
  for (const auto& r : config.lead_sets) sets.push_back({r.label(), {r}});
  auto in_set = [](const std::vector<LeadRange>& rs, int lead) {
    return std::any_of(rs.begin(), rs.end(), [&](const LeadRange& r) { return r.contains(lead); });
  };

  for (Method m : config.methods) {
    const auto scores = m == Method::Raw ? raw_scores : score_cases(config, m, predictions, cases);
    MethodReport mr;
    mr.method = m;
    mr.cases = scores.size();

    for (int lead = 1; lead <= kMaxLead; ++lead) {
      std::vector<const CaseScore*> at;
      for (const auto& s : scores)
        if (s.lead_h == lead) at.push_back(&s);
      if (at.empty()) continue;
      const auto a = accumulate(at);
      LeadScores ls;
      ls.lead_h = lead;
      ls.n = a.n;
      ls.crps = a.crps;
      ls.mae = a.mae;
      ls.coverage_pct = a.coverage.coverage_pct;
      ls.mean_width = a.coverage.mean_width;
      ls.low_signal = config.is_low_signal(lead);
      if (m != Method::Raw) skill(config, at, raw_index, lead, m, ls.crpss, ls.crpss_ci);
      mr.by_lead.push_back(ls);
    }

    for (std::size_t si = 0; si < sets.size(); ++si) {
      const auto& [label, ranges] = sets[si];
      std::vector<const CaseScore*> pooled, all;
      for (const auto& s : scores) {
        if (!in_set(ranges, s.lead_h)) continue;
        all.push_back(&s);
        if (s.obs >= config.min_obs) pooled.push_back(&s);
      }
      PooledScores ps;
      ps.lead_set = label;
      const auto a = accumulate(pooled);
      ps.n = a.n;
      ps.crps = a.crps;
      ps.mae = a.mae;
      ps.coverage_pct = a.coverage.coverage_pct;
      ps.mean_width = a.coverage.mean_width;
      if (m != Method::Raw)
        skill(config, pooled, raw_index, 1000 + static_cast<std::int64_t>(si), m, ps.crpss, ps.crpss_ci);
      mr.pooled.push_back(ps);
      mr.histograms.push_back(histogram_for(config, m, all, label));
    }
    rep.methods.push_back(std::move(mr));
  }
  return rep;
}

std::vector<PairedCase> verification_cases(const ExperimentConfig& config, std::span<const PairedCase> cases) {
  std::vector<PairedCase> out;
  for (const auto& c : cases) {
    const Date d = c.init_date();
    if (d >= config.verification_start && d <= config.verification_end) out.push_back(c);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const pipeline::Dataset& data,
                                const std::function<void(const pipeline::DayOutcome&)>& on_day) {
  pipeline::validate_against(config, data);
  ExperimentResult out;
  std::vector<std::string> failures;
  std::size_t days = 0;
  for (Date d = config.verification_start; d <= config.verification_end; d += std::chrono::days(1)) {
    auto day = pipeline::predict_day(config, data, d);
    ++days;
    if (on_day) on_day(day);
    out.predictions.insert(out.predictions.end(), day.predictions.begin(), day.predictions.end());
    failures.insert(failures.end(), day.failures.begin(), day.failures.end());
  }
  const auto cases = verification_cases(config, data.pairs.cases);
  out.report = verify(config, out.predictions, cases, days, std::move(failures));
  return out;
}

std::vector<Method> methods_without_predictions(const VerificationReport& report) {
  std::vector<Method> out;
  for (const auto& m : report.methods)
    if (m.cases == 0 && report.cases > 0) out.push_back(m.method);
  return out;
}

// JSON.

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json ci_json(const std::optional<scoring::BootstrapCI>& ci) {
  if (!ci) return nullptr;
  return json{{"lower", ci->lower},
              {"upper", ci->upper},
              {"level", ci->level},
              {"replicates", ci->replicates},
              {"mean_block_length", ci->mean_block_length}};
}

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<scoring::BootstrapCI> read_ci(const json& j, const char* key, const std::optional<double>& point) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& c = j.at(key);
  scoring::BootstrapCI ci;
  ci.point = point.value_or(0.0);
  ci.lower = c.at("lower").get<double>();
  ci.upper = c.at("upper").get<double>();
  ci.level = c.at("level").get<double>();
  ci.replicates = c.at("replicates").get<int>();
  ci.mean_block_length = c.at("mean_block_length").get<double>();
  return ci;
}

}  // namespace

json to_json(const VerificationReport& r) {
  json doc;
  doc["format"] = "solarcal-report";
  doc["version"] = 1;
  doc["seed"] = r.seed;
  doc["config"] = r.config;
  doc["verification_days"] = r.verification_days;
  doc["cases"] = r.cases;
  doc["empty"] = r.empty();
  doc["bootstrap"] = r.bootstrap;
  doc["nominal_coverage_pct"] = r.nominal_coverage_pct;
  doc["failures"] = r.failures;
  json methods = json::array();
  for (const auto& m : r.methods) {
    json jm;
    jm["method"] = pipeline::to_string(m.method);
    jm["cases"] = m.cases;
    json leads = json::array();
    for (const auto& l : m.by_lead)
      leads.push_back({{"lead_h", l.lead_h},
                       {"n", l.n},
                       {"crps", l.crps},
                       {"mae_median", l.mae},
                       {"coverage_pct", l.coverage_pct},
                       {"mean_width", l.mean_width},
                       {"crpss", optional_number(l.crpss)},
                       {"crpss_ci", ci_json(l.crpss_ci)},
                       {"low_signal", l.low_signal}});
    jm["by_lead"] = leads;
    json pooled = json::array();
    for (const auto& p : m.pooled)
      pooled.push_back({{"lead_set", p.lead_set},
                        {"n", p.n},
                        {"crps", p.crps},
                        {"mae_median", p.mae},
                        {"coverage_pct", p.coverage_pct},
                        {"mean_width", p.mean_width},
                        {"crpss", optional_number(p.crpss)},
                        {"crpss_ci", ci_json(p.crpss_ci)}});
    jm["pooled"] = pooled;
    json hists = json::array();
    for (const auto& h : m.histograms)
      hists.push_back({{"lead_set", h.lead_set},
                       {"kind", h.kind},
                       {"counts", h.histogram.counts},
                       {"total", h.histogram.total},
                       {"reliability_index", h.reliability_index}});
    jm["histograms"] = hists;
    methods.push_back(jm);
  }
  doc["methods"] = methods;
  return doc;
}

VerificationReport from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "solarcal-report" || doc.at("version").get<int>() != 1)
      throw DataError("not a version-1 solarcal report");
    VerificationReport r;
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.config = doc.at("config");
    r.verification_days = doc.at("verification_days").get<std::size_t>();
    r.cases = doc.at("cases").get<std::size_t>();
    r.bootstrap = doc.at("bootstrap").get<bool>();
    r.nominal_coverage_pct = doc.at("nominal_coverage_pct").get<double>();
    r.failures = doc.at("failures").get<std::vector<std::string>>();
    for (const auto& jm : doc.at("methods")) {
      MethodReport m;
      m.method = pipeline::method_from_string(jm.at("method").get<std::string>());
      m.cases = jm.at("cases").get<std::size_t>();
      for (const auto& jl : jm.at("by_lead")) {
        LeadScores l;
        l.lead_h = jl.at("lead_h").get<int>();
        l.n = jl.at("n").get<std::size_t>();
        l.crps = jl.at("crps").get<double>();
        l.mae = jl.at("mae_median").get<double>();
        l.coverage_pct = jl.at("coverage_pct").get<double>();
        l.mean_width = jl.at("mean_width").get<double>();
        l.crpss = read_optional(jl, "crpss");
        l.crpss_ci = read_ci(jl, "crpss_ci", l.crpss);
        l.low_signal = jl.at("low_signal").get<bool>();
        m.by_lead.push_back(l);
      }
      for (const auto& jp : jm.at("pooled")) {
        PooledScores p;
        p.lead_set = jp.at("lead_set").get<std::string>();
        p.n = jp.at("n").get<std::size_t>();
        p.crps = jp.at("crps").get<double>();
        p.mae = jp.at("mae_median").get<double>();
        p.coverage_pct = jp.at("coverage_pct").get<double>();
        p.mean_width = jp.at("mean_width").get<double>();
        p.crpss = read_optional(jp, "crpss");
        p.crpss_ci = read_ci(jp, "crpss_ci", p.crpss);
        m.pooled.push_back(p);
      }
      for (const auto& jh : jm.at("histograms")) {
        HistogramSummary h;
        h.lead_set = jh.at("lead_set").get<std::string>();
        h.kind = jh.at("kind").get<std::string>();
        h.histogram.counts = jh.at("counts").get<std::vector<std::int64_t>>();
        h.histogram.total = jh.at("total").get<std::int64_t>();
        h.reliability_index = jh.at("reliability_index").get<double>();
        m.histograms.push_back(h);
      }
      r.methods.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

// Tables.

namespace {

class Table {
 public:
  Table(const std::filesystem::path& path, const std::string& header) : path_(path), out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    out_ << header << '\n';
  }
  std::ostream& row() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw Error("failed writing '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string num(double v) { return csv::format_double(v); }

}  // namespace

void render(const VerificationReport& r, const std::string& outdir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec || !fs::is_directory(outdir)) throw Error("cannot create output directory '" + outdir + "'");
  const fs::path dir(outdir);

  {
    std::ofstream js(dir / "summary.json");
    if (!js) throw Error("cannot write '" + (dir / "summary.json").string() + "'");
    js << to_json(r).dump(2) << '\n';
    if (!js) throw Error("failed writing summary.json");
  }

  const bool ci = r.bootstrap;
  const std::string ci_head = ci ? ",ci_lo,ci_hi" : "";
  auto ci_cells = [&](const std::optional<scoring::BootstrapCI>& c) -> std::string {
    if (!ci) return "";
    return c ? "," + num(c->lower) + "," + num(c->upper) : ",,";
  };

  Table crps(dir / "crps.csv", "method,lead_h,metric,value,n,low_signal");
  Table crpss(dir / "crpss.csv", "method,lead_h,metric,value" + ci_head + ",low_signal");
  Table coverage(dir / "coverage.csv", "method,lead_h,metric,value,nominal_pct,low_signal");
  Table mae(dir / "mae.csv", "method,lead_h,metric,value,low_signal");
  Table pooled(dir / "pooled.csv", "method,lead_h,metric,value" + ci_head + ",n");
  Table hist(dir / "histograms.csv", "method,lead_h,kind,bin,count,relative_frequency,reliability_index");

  // An empty verification set leaves headers only; summary.json carries "empty".
  for (const auto& m : r.empty() ? std::vector<MethodReport>{} : r.methods) {
    const auto name = pipeline::to_string(m.method);
    for (const auto& l : m.by_lead) {
      const std::string tag = l.low_signal ? "1" : "0";
      crps.row() << name << ',' << l.lead_h << ",crps," << num(l.crps) << ',' << l.n << ',' << tag << '\n';
      if (l.crpss)
        crpss.row() << name << ',' << l.lead_h << ",crpss," << num(*l.crpss) << ci_cells(l.crpss_ci) << ',' << tag
                    << '\n';
      coverage.row() << name << ',' << l.lead_h << ",coverage_pct," << num(l.coverage_pct) << ','
                     << num(r.nominal_coverage_pct) << ',' << tag << '\n';
      coverage.row() << name << ',' << l.lead_h << ",mean_width," << num(l.mean_width) << ",," << tag << '\n';
      mae.row() << name << ',' << l.lead_h << ",mae_median," << num(l.mae) << ',' << tag << '\n';
    }
    for (const auto& p : m.pooled) {
      const std::string none = ci ? ",," : "";
      auto put = [&](const char* metric, double v, const std::string& cells) {
        pooled.row() << name << ',' << p.lead_set << ',' << metric << ',' << num(v) << cells << ',' << p.n << '\n';
      };
      put("crps", p.crps, none);
      put("mae_median", p.mae, none);
      put("coverage_pct", p.coverage_pct, none);
      put("mean_width", p.mean_width, none);
      if (p.crpss) put("crpss", *p.crpss, ci_cells(p.crpss_ci));
    }
    for (const auto& h : m.histograms) {
      const auto freq = h.histogram.total > 0 ? h.histogram.relative_frequencies()
                                              : std::vector<double>(h.histogram.bins(), 0.0);
      for (std::size_t b = 0; b < h.histogram.bins(); ++b)
        hist.row() << name << ',' << h.lead_set << ',' << h.kind << ',' << (b + 1) << ',' << h.histogram.counts[b]
                   << ',' << num(freq[b]) << ',' << num(h.reliability_index) << '\n';
    }
  }
  for (Table* t : {&crps, &crpss, &coverage, &mae, &pooled, &hist}) t->close();
}

}  // namespace solarcal::report
