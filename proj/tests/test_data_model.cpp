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

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "solarcal/data_model.hpp"
#include "solarcal/error.hpp"

using namespace solarcal;

namespace {

TimePoint at(const char* text) { return *try_parse_utc(text); }
Date day(const char* text) { return *try_parse_date(text); }

std::string forecast_header() { return "station_id,init_time,lead_h,m1,m2,m3,m4,m5,m6,m7,m8\n"; }

}  // namespace

TEST(Time, ParseAndFormat) {
  EXPECT_EQ(format_utc(at("2021-01-02T12:00:00Z")), "2021-01-02T12:00:00Z");
  EXPECT_EQ(format_utc(at("2021-01-02T12:00:00")), "2021-01-02T12:00:00Z");
  EXPECT_FALSE(try_parse_utc("2021-13-02T12:00:00Z"));
  EXPECT_FALSE(try_parse_utc("yesterday"));
  EXPECT_EQ(hour_of_day(at("2021-06-30T17:00:00Z")), 17);
  EXPECT_EQ(day_of_year(day("2021-12-31")), 365);
  EXPECT_EQ(day_of_year(day("2020-12-31")), 366);
}

TEST(Stations, ParsesTableRow) {
  std::istringstream in("id,name,lon,lat,alt_m,region\n17, El Tololo, -70.804, -30.168, 2154, IV\n");
  const auto r = read_stations(in, "stations.csv");
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].id, 17);
  EXPECT_EQ(r.rows[0].name, "El Tololo");
  EXPECT_DOUBLE_EQ(r.rows[0].longitude, -70.804);
  EXPECT_DOUBLE_EQ(r.rows[0].latitude, -30.168);
  EXPECT_DOUBLE_EQ(r.rows[0].altitude, 2154.0);
  EXPECT_EQ(r.rows[0].region, "IV");
}

TEST(Stations, HeaderOnlyIsEmpty) {
  std::istringstream in("id,name,lon,lat,alt_m,region\n");
  EXPECT_TRUE(read_stations(in, "s").rows.empty());
}

TEST(Stations, RejectsBoundsAndDuplicates) {
  std::istringstream bad_lat("id,name,lon,lat,alt_m,region\n1,A,-70,95,10,IV\n");
  EXPECT_THROW(read_stations(bad_lat, "s"), DataError);
  std::istringstream dup("id,name,lon,lat,alt_m,region\n1,A,-70,-30,10,IV\n1,B,-70,-30,10,IV\n");
  EXPECT_THROW(read_stations(dup, "s"), DataError);
  std::istringstream low("id,name,lon,lat,alt_m,region\n1,A,-70,-30,-600,IV\n");
  EXPECT_THROW(read_stations(low, "s"), DataError);
}

TEST(Stations, ErrorNamesTheLine) {
  std::istringstream in("id,name,lon,lat,alt_m,region\n1,A,-70,-30,10,IV\nx,B,-70,-30,10,IV\n");
  try {
    read_stations(in, "stations.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("stations.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Stations, UnknownColumnsNeedLax) {
  const std::string text = "id,name,lon,lat,alt_m,region,extra\n1,A,-70,-30,10,IV,z\n";
  std::istringstream strict(text);
  EXPECT_THROW(read_stations(strict, "s"), DataError);
  std::istringstream lax(text);
  EXPECT_EQ(read_stations(lax, "s", ReadOptions{true}).rows.size(), 1u);
}

TEST(Forecasts, ParsesDropsAndRejects) {
  std::istringstream ok(forecast_header() + "1,2021-01-01T00:00:00Z,12,1,2,3,4,5,6,7,8\n");
  const auto r = read_forecasts(ok, "f");
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].members[7], 8.0);
  EXPECT_EQ(format_utc(r.rows[0].valid_time()), "2021-01-01T12:00:00Z");

  std::istringstream blank(forecast_header() + "1,2021-01-01T00:00:00Z,12,1,2,3,4,,6,7,8\n" +
                           "1,2021-01-01T00:00:00Z,13,1,2,3,4,nan,6,7,8\n");
  const auto d = read_forecasts(blank, "f");
  EXPECT_TRUE(d.rows.empty());
  EXPECT_EQ(d.dropped, 2u);

  std::istringstream neg(forecast_header() + "1,2021-01-01T00:00:00Z,12,1,2,3,4,-3.0,6,7,8\n");
  EXPECT_THROW(read_forecasts(neg, "f"), DataError);
  std::istringstream lead(forecast_header() + "1,2021-01-01T00:00:00Z,49,1,2,3,4,5,6,7,8\n");
  EXPECT_THROW(read_forecasts(lead, "f"), DataError);
  std::istringstream ts(forecast_header() + "1,2021-01-01 noon,12,1,2,3,4,5,6,7,8\n");
  EXPECT_THROW(read_forecasts(ts, "f"), DataError);
}

TEST(Forecasts, DustBelowZeroSnapsToZero) {
  std::istringstream in(forecast_header() + "1,2021-01-01T00:00:00Z,12,-1e-12,2,3,4,5,6,7,8\n");
  EXPECT_EQ(read_forecasts(in, "f").rows[0].members[0], 0.0);
}

TEST(Observations, ParsesAndDrops) {
  std::istringstream in(
      "station_id,valid_time,ghi_wm2\n1,2021-01-02T12:00:00Z,512.5\n1,2021-01-02T13:00:00Z,\n");
  const auto r = read_observations(in, "o");
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].ghi, 512.5);
  EXPECT_EQ(r.dropped, 1u);
  std::istringstream neg("station_id,valid_time,ghi_wm2\n1,2021-01-02T12:00:00Z,-4\n");
  EXPECT_THROW(read_observations(neg, "o"), DataError);
}

TEST(Io, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1200);
  std::vector<ForecastRecord> fs;
  for (int i = 0; i < 20; ++i) {
    ForecastRecord f;
    f.station_id = i % 3 + 1;
    f.init_time = at("2021-03-01T00:00:00Z") + std::chrono::days(i);
    f.lead_h = i % 48 + 1;
    for (auto& m : f.members) m = u(rng);
    fs.push_back(f);
  }
  std::stringstream buf;
  write_forecasts(buf, fs);
  const auto back = read_forecasts(buf, "buf").rows;
  ASSERT_EQ(back.size(), fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    EXPECT_EQ(back[i].init_time, fs[i].init_time);
    EXPECT_EQ(back[i].members, fs[i].members);
  }

  std::vector<Station> st{{4, "Quoted, Name", -70.5, -29.9, 1200.25, "IV"}};
  std::stringstream sb;
  write_stations(sb, st);
  const auto sback = read_stations(sb, "sb").rows;
  ASSERT_EQ(sback.size(), 1u);
  EXPECT_EQ(sback[0].name, "Quoted, Name");
  EXPECT_EQ(sback[0].altitude, 1200.25);
}

TEST(Grid, NearestPoint) {
  Station s;
  s.latitude = -27.254;
  s.longitude = -70.781;
  const std::vector<double> lats{-27.25, -27.00}, lons{-70.78, -70.50};
  const auto m = nearest_grid_point(lats, lons, s);
  EXPECT_EQ(m.index, 0u);
  // Haversine distances evaluated at 30 digits.
  EXPECT_NEAR(m.distance_km, 0.455632924111372, 1e-9);
  EXPECT_NEAR(haversine_km(-27.254, -70.781, -27.0, -70.5), 39.6360978174585, 1e-9);
  EXPECT_NEAR(haversine_km(-27.254, -70.781, -27.0, -70.5), oracle::great_circle_km(-27.254, -70.781, -27.0, -70.5),
              1e-6);

  const std::vector<double> same_lat{s.latitude}, same_lon{s.longitude};
  EXPECT_EQ(nearest_grid_point(same_lat, same_lon, s).distance_km, 0.0);

  const std::vector<double> tie_lats{-27.0, -27.3, -27.3}, tie_lons{-70.5, -70.9, -70.9};
  EXPECT_EQ(nearest_grid_point(tie_lats, tie_lons, s).index, 1u);
  EXPECT_THROW(nearest_grid_point(std::vector<double>{}, std::vector<double>{}, s), DataError);
}

TEST(EnsembleStats, Examples) {
  const Members zeros{};
  const auto z = ensemble_stats(zeros);
  EXPECT_EQ(z.mean, 0.0);
  EXPECT_EQ(z.variance, 0.0);
  EXPECT_EQ(z.p0, 1.0);

  const Members two{100, 100, 100, 100, 200, 200, 200, 200};
  const auto t = ensemble_stats(two);
  EXPECT_EQ(t.mean, 150.0);
  EXPECT_EQ(t.p0, 0.0);
  EXPECT_DOUBLE_EQ(t.variance, 8.0 * 2500.0 / 7.0);

  const Members some{0, 0, 300, 300, 300, 300, 300, 300};
  EXPECT_EQ(ensemble_stats(some).p0, 0.25);
}

TEST(EnsembleStats, PermutationInvariantBitForBit) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1000);
  for (int i = 0; i < 200; ++i) {
    Members m;
    for (auto& v : m) v = u(rng) < 300 ? 0.0 : u(rng);
    const auto base = ensemble_stats(m);
    std::shuffle(m.begin(), m.end(), rng);
    const auto perm = ensemble_stats(m);
    EXPECT_EQ(base.mean, perm.mean);
    EXPECT_EQ(base.variance, perm.variance);
    EXPECT_EQ(base.p0, perm.p0);
  }
}

TEST(Pairing, JoinSemantics) {
  std::vector<ForecastRecord> fs(3);
  fs[0].station_id = 1;
  fs[0].init_time = at("2021-01-02T00:00:00Z");
  fs[0].lead_h = 12;
  fs[1].station_id = 1;
  fs[1].init_time = at("2021-01-01T00:00:00Z");
  fs[1].lead_h = 36;
  fs[2].station_id = 2;
  fs[2].init_time = at("2021-01-02T00:00:00Z");
  fs[2].lead_h = 5;
  std::vector<Observation> obs{{1, at("2021-01-02T12:00:00Z"), 400.0}, {3, at("2021-01-02T12:00:00Z"), 1.0}};
  const auto r = pair_cases(fs, obs);
  ASSERT_EQ(r.cases.size(), 2u);
  EXPECT_EQ(r.cases[0].lead_h, 36);  // earlier init sorts first
  EXPECT_EQ(r.cases[1].lead_h, 12);
  EXPECT_EQ(r.cases[0].obs, 400.0);
  EXPECT_EQ(r.unmatched_forecasts, 1u);
  EXPECT_EQ(r.unmatched_observations, 1u);
}

TEST(Window, CalendarArithmetic) {
  const RollingWindow w{day("2021-04-01"), 85};
  EXPECT_EQ(format_date(w.first()), "2021-01-06");
  EXPECT_EQ(format_date(w.last()), "2021-03-31");
  EXPECT_FALSE(w.contains(day("2021-04-01")));
  EXPECT_TRUE(w.contains(day("2021-01-06")));
  EXPECT_FALSE(w.contains(day("2021-01-05")));

  std::vector<PairedCase> cases;
  for (const char* d : {"2021-03-30", "2021-03-31", "2021-04-01"}) {
    PairedCase c;
    c.init_time = midnight(day(d));
    cases.push_back(c);
  }
  const auto one = select_window(cases, RollingWindow{day("2021-04-01"), 1});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(format_date(one[0].init_date()), "2021-03-31");
}
