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

#include "solarcal/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include "csv.hpp"
#include "solarcal/error.hpp"

namespace solarcal {
namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

// Maps the header onto the expected column names.
class Columns {
 public:
  Columns(const std::vector<std::string>& header, const std::vector<std::string>& required,
          const std::string& source, const ReadOptions& opts)
      : width_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) index_[header[i]] = i;
    for (const auto& name : required) {
      if (!index_.count(name)) throw DataError(where(source, 1) + "missing column '" + name + "'");
    }
    if (!opts.lax) {
      std::set<std::string> known(required.begin(), required.end());
      for (const auto& name : header)
        if (!known.count(name))
          throw DataError(where(source, 1) + "unknown column '" + name + "' (use --lax to ignore)");
    }
  }

  std::size_t operator[](const std::string& name) const { return index_.at(name); }
  std::size_t width() const { return width_; }

 private:
  std::map<std::string, std::size_t> index_;
  std::size_t width_;
};

template <typename OnRow>
void for_each_row(std::istream& in, const std::string& source, const std::vector<std::string>& required,
                  const ReadOptions& opts, OnRow&& on_row) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(where(source, 0) + "missing header");
  const Columns cols(csv::split(line), required, source, opts);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    auto fields = csv::split(line);
    if (fields.size() != cols.width())
      throw DataError(where(source, lineno) + "expected " + std::to_string(cols.width()) +
                      " fields, got " + std::to_string(fields.size()));
    on_row(cols, fields, lineno);
  }
}

int parse_int_field(const std::string& s, const std::string& what, const std::string& source,
                    std::size_t line) {
  auto v = csv::parse_int(s);
  if (!v) throw DataError(where(source, line) + "cannot parse " + what + " '" + s + "'");
  return *v;
}

double parse_double_field(const std::string& s, const std::string& what, const std::string& source,
                          std::size_t line) {
  auto v = csv::parse_double(s);
  if (!v || !std::isfinite(*v)) throw DataError(where(source, line) + "cannot parse " + what + " '" + s + "'");
  return *v;
}

TimePoint parse_time_field(const std::string& s, const std::string& what, const std::string& source,
                           std::size_t line) {
  auto t = try_parse_utc(s);
  if (!t) throw DataError(where(source, line) + "unparseable " + what + " timestamp '" + s + "'");
  return *t;
}

// Irradiance value: nullopt when missing or non-finite (row gets dropped),
// error when negative beyond float dust.
std::optional<double> parse_irradiance(const std::string& s, const std::string& what,
                                       const std::string& source, std::size_t line) {
  if (s.empty()) return std::nullopt;
  auto v = csv::parse_double(s);
  if (!v) {
    throw DataError(where(source, line) + "cannot parse " + what + " '" + s + "'");
  }
  if (!std::isfinite(*v)) return std::nullopt;
  if (*v < -kZeroDust)
    throw DataError(where(source, line) + what + " is negative (" + s + ")");
  return std::abs(*v) < kZeroDust ? 0.0 : *v;
}

template <typename T>
LoadResult<T> open_and_read(const std::string& path, const ReadOptions& opts,
                            LoadResult<T> (*reader)(std::istream&, const std::string&, const ReadOptions&)) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return reader(in, path, opts);
}

}  // namespace

double EnsembleStats::sd() const { return std::sqrt(variance); }

LoadResult<Station> read_stations(std::istream& in, const std::string& source, const ReadOptions& opts) {
  LoadResult<Station> out;
  std::set<int> seen;
  for_each_row(in, source, {"id", "name", "lon", "lat", "alt_m", "region"}, opts,
               [&](const Columns& c, const std::vector<std::string>& f, std::size_t line) {
                 Station s;
                 s.id = parse_int_field(f[c["id"]], "id", source, line);
                 s.name = f[c["name"]];
                 s.longitude = parse_double_field(f[c["lon"]], "lon", source, line);
                 s.latitude = parse_double_field(f[c["lat"]], "lat", source, line);
                 s.altitude = parse_double_field(f[c["alt_m"]], "alt_m", source, line);
                 s.region = f[c["region"]];
                 if (s.latitude < -90 || s.latitude > 90)
                   throw DataError(where(source, line) + "latitude out of range [-90, 90]");
                 if (s.longitude < -180 || s.longitude > 180)
                   throw DataError(where(source, line) + "longitude out of range [-180, 180]");
                 if (s.altitude < -500) throw DataError(where(source, line) + "altitude below -500 m");
                 if (!seen.insert(s.id).second)
                   throw DataError(where(source, line) + "duplicate station id " + std::to_string(s.id));
                 out.rows.push_back(std::move(s));
               });
  return out;
}

LoadResult<ForecastRecord> read_forecasts(std::istream& in, const std::string& source,
                                          const ReadOptions& opts) {
  std::vector<std::string> required = {"station_id", "init_time", "lead_h"};
  for (int k = 1; k <= kMembers; ++k) required.push_back("m" + std::to_string(k));
  LoadResult<ForecastRecord> out;
  for_each_row(in, source, required, opts,
               [&](const Columns& c, const std::vector<std::string>& f, std::size_t line) {
                 ForecastRecord r;
                 r.station_id = parse_int_field(f[c["station_id"]], "station_id", source, line);
                 r.init_time = parse_time_field(f[c["init_time"]], "init_time", source, line);
                 r.lead_h = parse_int_field(f[c["lead_h"]], "lead_h", source, line);
                 if (r.lead_h < 1 || r.lead_h > kMaxLead)
                   throw DataError(where(source, line) + "lead_h outside 1.." + std::to_string(kMaxLead));
                 bool complete = true;
                 for (int k = 0; k < kMembers; ++k) {
                   const std::string name = "m" + std::to_string(k + 1);
                   auto v = parse_irradiance(f[c[name]], name, source, line);
                   if (!v) complete = false;
                   else r.members[static_cast<std::size_t>(k)] = *v;
                 }
                 if (complete) out.rows.push_back(r);
                 else ++out.dropped;
               });
  return out;
}

LoadResult<Observation> read_observations(std::istream& in, const std::string& source,
                                          const ReadOptions& opts) {
  LoadResult<Observation> out;
  for_each_row(in, source, {"station_id", "valid_time", "ghi_wm2"}, opts,
               [&](const Columns& c, const std::vector<std::string>& f, std::size_t line) {
                 Observation o;
                 o.station_id = parse_int_field(f[c["station_id"]], "station_id", source, line);
                 o.valid_time = parse_time_field(f[c["valid_time"]], "valid_time", source, line);
                 auto v = parse_irradiance(f[c["ghi_wm2"]], "ghi_wm2", source, line);
                 if (!v) {
                   ++out.dropped;
                   return;
                 }
                 o.ghi = *v;
                 out.rows.push_back(o);
               });
  return out;
}

LoadResult<Station> load_stations(const std::string& path, const ReadOptions& opts) {
  return open_and_read<Station>(path, opts, &read_stations);
}
LoadResult<ForecastRecord> load_forecasts(const std::string& path, const ReadOptions& opts) {
  return open_and_read<ForecastRecord>(path, opts, &read_forecasts);
}
LoadResult<Observation> load_observations(const std::string& path, const ReadOptions& opts) {
  return open_and_read<Observation>(path, opts, &read_observations);
}

void write_stations(std::ostream& out, std::span<const Station> stations) {
  out << "id,name,lon,lat,alt_m,region\n";
  for (const auto& s : stations)
    out << s.id << ',' << csv::quote(s.name) << ',' << csv::format_double(s.longitude) << ','
        << csv::format_double(s.latitude) << ',' << csv::format_double(s.altitude) << ','
        << csv::quote(s.region) << '\n';
}

void write_forecasts(std::ostream& out, std::span<const ForecastRecord> forecasts) {
  out << "station_id,init_time,lead_h";
  for (int k = 1; k <= kMembers; ++k) out << ",m" << k;
  out << '\n';
  for (const auto& r : forecasts) {
    out << r.station_id << ',' << format_utc(r.init_time) << ',' << r.lead_h;
    for (double m : r.members) out << ',' << csv::format_double(m);
    out << '\n';
  }
}

void write_observations(std::ostream& out, std::span<const Observation> observations) {
  out << "station_id,valid_time,ghi_wm2\n";
  for (const auto& o : observations)
    out << o.station_id << ',' << format_utc(o.valid_time) << ',' << csv::format_double(o.ghi) << '\n';
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

GridMatch nearest_grid_point(std::span<const double> grid_lats, std::span<const double> grid_lons,
                             const Station& station) {
  if (grid_lats.empty()) throw DataError("nearest_grid_point: empty grid");
  if (grid_lats.size() != grid_lons.size())
    throw DataError("nearest_grid_point: latitude/longitude arrays differ in length");
  GridMatch best{0, haversine_km(station.latitude, station.longitude, grid_lats[0], grid_lons[0])};
  for (std::size_t i = 1; i < grid_lats.size(); ++i) {
    const double d = haversine_km(station.latitude, station.longitude, grid_lats[i], grid_lons[i]);
    if (d < best.distance_km) best = {i, d};
  }
  return best;
}

EnsembleStats ensemble_stats(std::span<const double, kMembers> members) {
  // Sorting first makes the floating-point sums order-independent.
  std::array<double, kMembers> f;
  std::copy(members.begin(), members.end(), f.begin());
  std::sort(f.begin(), f.end());
  double sum = 0;
  int zeros = 0;
  for (double v : f) {
    sum += v;
    zeros += v == 0.0 ? 1 : 0;
  }
  EnsembleStats s;
  s.mean = sum / kMembers;
  double ss = 0;
  for (double v : f) ss += (v - s.mean) * (v - s.mean);
  s.variance = ss / (kMembers - 1);
  s.p0 = static_cast<double>(zeros) / kMembers;
  return s;
}

PairingResult pair_cases(std::span<const ForecastRecord> forecasts,
                         std::span<const Observation> observations) {
  using Key = std::pair<int, TimePoint::rep>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<long long>()(static_cast<long long>(k.second) * 1315423911LL + k.first);
    }
  };
  PairingResult out;
  std::unordered_map<Key, std::size_t, KeyHash> obs_index;
  obs_index.reserve(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    if (!obs_index.emplace(Key{o.station_id, o.valid_time.time_since_epoch().count()}, i).second)
      ++out.duplicate_observations;
  }
  std::vector<char> used(observations.size(), 0);
  for (const auto& f : forecasts) {
    auto it = obs_index.find(Key{f.station_id, f.valid_time().time_since_epoch().count()});
    if (it == obs_index.end()) {
      ++out.unmatched_forecasts;
      continue;
    }
    used[it->second] = 1;
    PairedCase c;
    c.station_id = f.station_id;
    c.init_time = f.init_time;
    c.lead_h = f.lead_h;
    c.members = f.members;
    c.stats = ensemble_stats(f.members);
    c.obs = observations[it->second].ghi;
    out.cases.push_back(c);
  }
  for (const auto& [key, idx] : obs_index) out.unmatched_observations += used[idx] ? 0 : 1;
  std::stable_sort(out.cases.begin(), out.cases.end(), [](const PairedCase& a, const PairedCase& b) {
    return std::tie(a.init_time, a.station_id, a.lead_h) < std::tie(b.init_time, b.station_id, b.lead_h);
  });
  return out;
}

std::vector<PairedCase> select_window(std::span<const PairedCase> cases, const RollingWindow& window) {
  std::vector<PairedCase> out;
  for (const auto& c : cases)
    if (window.contains(c.init_date())) out.push_back(c);
  return out;
}

}  // namespace solarcal
