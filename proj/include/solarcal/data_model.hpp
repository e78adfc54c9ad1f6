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

// Domain types, file ingestion, forecast-observation pairing and rolling
// training windows.

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "solarcal/time.hpp"

namespace solarcal {

inline constexpr int kMembers = 8;
inline constexpr int kMaxLead = 48;
/// Ingestion clamps |x| below this to exactly zero.
inline constexpr double kZeroDust = 1e-9;

using Members = std::array<double, kMembers>;

struct Station {
  int id = 0;
  std::string name;
  double longitude = 0;  // degrees east
  double latitude = 0;   // degrees north
  double altitude = 0;   // m
  std::string region;
};

struct ForecastRecord {
  int station_id = 0;
  TimePoint init_time;
  int lead_h = 1;
  Members members{};

  TimePoint valid_time() const { return init_time + std::chrono::hours(lead_h); }
};

struct Observation {
  int station_id = 0;
  TimePoint valid_time;
  double ghi = 0;
};

struct EnsembleStats {
  double mean = 0;
  double variance = 0;  // divisor K-1
  double p0 = 0;

  double sd() const;
};

struct PairedCase {
  int station_id = 0;
  TimePoint init_time;
  int lead_h = 1;
  Members members{};
  EnsembleStats stats;
  double obs = 0;

  TimePoint valid_time() const { return init_time + std::chrono::hours(lead_h); }
  Date init_date() const { return date_of(init_time); }
};

/// The `length_days` calendar days strictly before `target_date`.
struct RollingWindow {
  Date target_date;
  int length_days = 1;

  Date first() const { return target_date - std::chrono::days(length_days); }
  Date last() const { return target_date - std::chrono::days(1); }
  bool contains(Date d) const { return d >= first() && d < target_date; }
};

struct ReadOptions {
  bool lax = false;  // tolerate unknown columns
};

template <typename T>
struct LoadResult {
  std::vector<T> rows;
  std::size_t dropped = 0;
};

LoadResult<Station> load_stations(const std::string& path, const ReadOptions& opts = {});
LoadResult<Station> read_stations(std::istream& in, const std::string& source, const ReadOptions& opts = {});

LoadResult<ForecastRecord> load_forecasts(const std::string& path, const ReadOptions& opts = {});
LoadResult<ForecastRecord> read_forecasts(std::istream& in, const std::string& source,
                                          const ReadOptions& opts = {});

LoadResult<Observation> load_observations(const std::string& path, const ReadOptions& opts = {});
LoadResult<Observation> read_observations(std::istream& in, const std::string& source,
                                          const ReadOptions& opts = {});

void write_stations(std::ostream& out, std::span<const Station> stations);
void write_forecasts(std::ostream& out, std::span<const ForecastRecord> forecasts);
void write_observations(std::ostream& out, std::span<const Observation> observations);

struct GridMatch {
  std::size_t index = 0;
  double distance_km = 0;
};

/// Great-circle distance on a sphere of radius 6371.0088 km.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Closest grid point to the station; ties go to the lowest index.
GridMatch nearest_grid_point(std::span<const double> grid_lats, std::span<const double> grid_lons,
                             const Station& station);

EnsembleStats ensemble_stats(std::span<const double, kMembers> members);

struct PairingResult {
  std::vector<PairedCase> cases;
  std::size_t unmatched_forecasts = 0;
  std::size_t unmatched_observations = 0;
  std::size_t duplicate_observations = 0;
};

/// Inner join on (station_id, valid_time). Output ordered by
/// (init_time, station_id, lead_h).
PairingResult pair_cases(std::span<const ForecastRecord> forecasts,
                         std::span<const Observation> observations);

std::vector<PairedCase> select_window(std::span<const PairedCase> cases, const RollingWindow& window);

}  // namespace solarcal
