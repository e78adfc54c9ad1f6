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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "solarcal/error.hpp"
#include "solarcal/pipeline.hpp"
#include "solarcal/report.hpp"
#include "solarcal/synth.hpp"

using namespace solarcal;
using namespace solarcal::pipeline;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config_json() {
  return nlohmann::json::parse(R"({
    "synthetic": {"stations": 6, "days": 30, "seed": 3},
    "verification": {"start": "2021-01-23", "end": "2021-01-24"},
    "emos": {"window_days": 20, "clusters": 2},
    "network": {"hidden": [8], "runs": 2, "max_epochs": 4, "batch_size": 256},
    "drn": {"window_days": 10},
    "corrected": {"window_days": 10},
    "bootstrap": {"replicates": 50},
    "seed": 11
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("solarcal_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SOLARCAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Synthetic, DeterministicPerSeed) {
  synth::SyntheticSpec spec;
  spec.stations = 3;
  spec.days = 4;
  const auto a = synth::generate(spec);
  const auto b = synth::generate(spec);
  ASSERT_EQ(a.forecasts.size(), 3u * 4u * 48u);
  EXPECT_EQ(a.observations.size(), 3u * 6u * 24u);
  for (std::size_t i = 0; i < a.forecasts.size(); ++i) EXPECT_EQ(a.forecasts[i].members, b.forecasts[i].members);
  spec.seed = 2;
  const auto c = synth::generate(spec);
  bool differs = false;
  for (std::size_t i = 0; i < a.forecasts.size(); ++i) differs |= a.forecasts[i].members != c.forecasts[i].members;
  EXPECT_TRUE(differs);
}

TEST(Synthetic, NightIsZeroAndBiasIsPositive) {
  synth::SyntheticSpec spec;
  spec.stations = 4;
  spec.days = 30;
  spec.bias = 0.3;
  const auto d = synth::generate(spec);
  std::map<std::pair<int, TimePoint>, double> obs;
  for (const auto& o : d.observations) obs[{o.station_id, o.valid_time}] = o.ghi;
  double err = 0;
  int n = 0;
  for (const auto& f : d.forecasts) {
    const int h = hour_of_day(f.valid_time());
    if (h < 9) {
      for (double m : f.members) EXPECT_EQ(m, 0.0);
      EXPECT_EQ(obs.at({f.station_id, f.valid_time()}), 0.0);
    }
    if (h >= 15 && h <= 18) {
      err += ensemble_stats(f.members).mean - obs.at({f.station_id, f.valid_time()});
      ++n;
    }
  }
  EXPECT_GT(err / n, 20.0);
  spec.dispersion = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Config, ParsesAndRoundTrips) {
  const auto c = config_from_json(small_config_json());
  EXPECT_EQ(c.emos.window_days, 20);
  EXPECT_EQ(c.drn.hidden, (std::vector<int>{8}));
  EXPECT_EQ(c.corrected.hidden, (std::vector<int>{8}));
  EXPECT_EQ(c.corrected.head, nnet::Head::Members);
  EXPECT_EQ(c.methods.size(), 6u);
  EXPECT_EQ(c.max_window_days(), 20);
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, RejectsInvalidSettings) {
  auto j = small_config_json();
  j["precision"] = "half";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config_json();
  j["methods"] = {"raw", "bogus"};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config_json();
  j["verification"]["end"] = "2021-01-01";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_config_json();
  j.erase("synthetic");
  EXPECT_THROW(config_from_json(j), ConfigError);
  EXPECT_THROW(LeadRange::parse("5"), ConfigError);
  EXPECT_EQ(LeadRange::parse("13:22").label(), "13-22");
  EXPECT_EQ(parse_methods("drn,raw,drn"), (std::vector<Method>{Method::Raw, Method::Drn}));
}

TEST(Config, WindowMustFitBeforeVerification) {
  auto c = config_from_json(small_config_json());
  const auto data = load_dataset(c);
  EXPECT_NO_THROW(validate_against(c, data));
  c.verification_start = data.first_date() + std::chrono::days(19);
  EXPECT_THROW(validate_against(c, data), ConfigError);
  c.verification_start = data.first_date() + std::chrono::days(20);
  c.verification_end = data.last_date() + std::chrono::days(1);
  EXPECT_THROW(validate_against(c, data), ConfigError);
}

TEST(Leakage, TrainingWindowEndsBeforeTheDay) {
  const auto c = config_from_json(small_config_json());
  const auto data = load_dataset(c);
  const Date day = c.verification_start;
  const auto w = training_window(data.pairs.cases, day, 10);
  ASSERT_FALSE(w.empty());
  for (const auto& cs : w) {
    EXPECT_LT(cs.init_date(), day);
    EXPECT_GE(cs.init_date(), day - std::chrono::days(10));
  }
  std::vector<PairedCase> poisoned = w;
  poisoned.back().init_time = midnight(day);
  EXPECT_THROW(audit_no_leakage(poisoned, day), std::logic_error);
}

TEST(Predictions, RoundTrip) {
  std::vector<Prediction> p(2);
  p[0].method = Method::Emos;
  p[0].station_id = 4;
  p[0].init_time = midnight(Date(std::chrono::year{2021} / 2 / 3));
  p[0].lead_h = 17;
  p[0].law = {123.456789012345, 0.1 + 0.2};
  p[1].method = Method::Corrected;
  p[1].station_id = 5;
  p[1].init_time = p[0].init_time;
  p[1].lead_h = 48;
  p[1].members = {0, 0, 1.5, 2, 3, 4, 5, 1e-17};
  std::sort(p[1].members.begin(), p[1].members.end());
  std::stringstream s;
  write_predictions(s, p);
  const auto back = read_predictions(s, "mem");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].law.mu, p[0].law.mu);
  EXPECT_EQ(back[0].law.sigma, p[0].law.sigma);
  EXPECT_EQ(back[1].members, p[1].members);
  EXPECT_EQ(back[1].method, Method::Corrected);
  std::istringstream bad("method,station_id\n");
  EXPECT_THROW(read_predictions(bad, "mem"), DataError);
}

TEST(Predictions, QuantileMembersAreSortedCn0Quantiles) {
  const auto m = quantile_members(cn0::ParamsD{100, 50});
  EXPECT_TRUE(std::is_sorted(m.begin(), m.end()));
  for (int k = 0; k < kMembers; ++k)
    EXPECT_DOUBLE_EQ(m[static_cast<std::size_t>(k)], cn0::quantile(cn0::ParamsD{100, 50}, (k + 1) / 9.0));
}

TEST(ParallelFor, OrderIndependent) {
  std::vector<int> a(100), b(100);
  parallel_for(100, 1, [&](int i) { a[static_cast<std::size_t>(i)] = i * i; });
  parallel_for(100, 4, [&](int i) { b[static_cast<std::size_t>(i)] = i * i; });
  EXPECT_EQ(a, b);
}

TEST(Verify, RawOnlyHasNoSkill) {
  auto c = config_from_json(small_config_json());
  c.methods = {Method::Raw};
  const auto data = load_dataset(c);
  const auto cases = report::verification_cases(c, data.pairs.cases);
  const auto r = report::verify(c, {}, cases, 2);
  ASSERT_EQ(r.methods.size(), 1u);
  for (const auto& l : r.methods[0].by_lead) EXPECT_FALSE(l.crpss.has_value());
  EXPECT_EQ(r.methods[0].by_lead.size(), 48u);
}

TEST(Verify, ReferenceScoresItselfWithZeroSkill) {
  auto c = config_from_json(small_config_json());
  c.methods = {Method::Corrected};
  c.bootstrap = false;
  const auto data = load_dataset(c);
  const auto cases = report::verification_cases(c, data.pairs.cases);
  auto preds = report::raw_predictions(cases);
  for (auto& p : preds) p.method = Method::Corrected;
  const auto r = report::verify(c, preds, cases, 2);
  const auto* m = r.find(Method::Corrected);
  ASSERT_NE(m, nullptr);
  for (const auto& l : m->by_lead)
    if (l.crpss) {
      EXPECT_NEAR(*l.crpss, 0.0, 1e-15);
    }
  EXPECT_EQ(report::methods_without_predictions(r).size(), 0u);
}

TEST(Report, EmptyReportRendersHeaderOnlyTables) {
  report::VerificationReport r;
  const auto dir = scratch("empty_report");
  report::render(r, dir.string());
  for (const char* t : {"crps.csv", "crpss.csv", "coverage.csv", "mae.csv", "pooled.csv", "histograms.csv"}) {
    EXPECT_TRUE(fs::exists(dir / t)) << t;
    EXPECT_EQ(line_count(dir / t), 1u) << t;
  }
  EXPECT_TRUE(report::from_json(report::to_json(r)).empty());
}

TEST(Report, CiColumnsOnlyWithBootstrap) {
  auto c = config_from_json(small_config_json());
  c.methods = {Method::Emos};
  const auto data = load_dataset(c);
  for (bool boot : {true, false}) {
    c.bootstrap = boot;
    const auto res = report::run_experiment(c, data);
    const auto dir = scratch(boot ? "ci_on" : "ci_off");
    report::render(res.report, dir.string());
    const auto header = first_line(dir / "crpss.csv");
    EXPECT_EQ(header.find("ci_lo") != std::string::npos, boot) << header;
    const auto again = report::from_json(report::to_json(res.report));
    EXPECT_EQ(report::to_json(again).dump(), report::to_json(res.report).dump());
  }
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  auto c = config_from_json(small_config_json());
  c.verification_end = c.verification_start;
  const auto data = load_dataset(c);
  const auto a = report::run_experiment(c, data);
  c.threads = 3;
  const auto b = report::run_experiment(c, data);
  std::stringstream sa, sb;
  write_predictions(sa, a.predictions);
  write_predictions(sb, b.predictions);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_TRUE(a.report.failures.empty());
  for (Method m : c.methods) EXPECT_NE(a.report.find(m), nullptr);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "good.json") << small_config_json().dump();
    auto bad = small_config_json();
    bad["precision"] = "half";
    std::ofstream(dir / "bad.json") << bad.dump();
    auto early = small_config_json();
    early["verification"]["start"] = "2021-01-05";
    std::ofstream(dir / "early.json") << early.dump();
  }
  EXPECT_EQ(run_cli("--definitely-not-a-flag"), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "o1").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "early.json").string() + " --out " + (dir / "o2").string()), 2);
  EXPECT_EQ(run_cli("report --report " + (dir / "missing.json").string() + " --out " + (dir / "o3").string()), 3);
  EXPECT_EQ(run_cli("synth --seed 4 --out " + (dir / "data").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "forecasts.csv"));
}

TEST(Cli, StagedCommandsMatchRun) {
  const auto dir = scratch("cli_staged");
  auto j = small_config_json();
  j["verification"]["end"] = j["verification"]["start"];
  j["methods"] = {"raw", "emos", "emos_q"};
  std::ofstream(dir / "c.json") << j.dump();
  const std::string cfg = " --config " + (dir / "c.json").string() + " --quiet";
  ASSERT_EQ(run_cli("run" + cfg + " --out " + (dir / "run").string()), 0);
  ASSERT_EQ(run_cli("train-emos" + cfg + " --out " + (dir / "models").string()), 0);
  ASSERT_EQ(run_cli("predict" + cfg + " --models " + (dir / "models").string() + " --out " + (dir / "pred").string()),
            0);
  EXPECT_EQ(slurp(dir / "pred" / "predictions.csv"), slurp(dir / "run" / "predictions.csv"));
  ASSERT_EQ(run_cli("verify" + cfg + " --predictions " + (dir / "pred" / "predictions.csv").string() + " --out " +
                    (dir / "ver").string()),
            0);
  EXPECT_EQ(slurp(dir / "ver" / "summary.json"), slurp(dir / "run" / "summary.json"));
  ASSERT_EQ(run_cli("report --report " + (dir / "ver" / "summary.json").string() + " --out " + (dir / "tables").string()),
            0);
  EXPECT_EQ(slurp(dir / "tables" / "crps.csv"), slurp(dir / "run" / "crps.csv"));
}
