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

#include "solarcal/synth.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "solarcal/error.hpp"
#include "solarcal/rng.hpp"

namespace solarcal::synth {

void SyntheticSpec::validate() const {
  if (stations < 1 || days < 1) throw ConfigError("synthetic: stations and days must be positive");
  if (!(sunset_utc > sunrise_utc)) throw ConfigError("synthetic: sunset must follow sunrise");
  if (!(attenuation_min >= 0 && attenuation_min <= 1)) throw ConfigError("synthetic: attenuation_min in [0,1]");
  if (!(attenuation_ar >= 0 && attenuation_ar < 1)) throw ConfigError("synthetic: attenuation_ar in [0,1)");
  if (!(noise_scale >= 0) || !(center_error >= 0)) throw ConfigError("synthetic: noise scales must be >= 0");
  if (!(bias >= 0)) throw ConfigError("synthetic: bias must be >= 0");
  if (!(dispersion > 0 && dispersion <= 1)) throw ConfigError("synthetic: dispersion must lie in (0, 1]");
}

double clear_sky(const SyntheticSpec& spec, const Station& station, TimePoint t) {
  const double h = static_cast<double>(hour_of_day(t));
  if (h <= spec.sunrise_utc || h >= spec.sunset_utc) return 0.0;
  const double phase = std::numbers::pi * (h - spec.sunrise_utc) / (spec.sunset_utc - spec.sunrise_utc);
  // Southern-hemisphere season: maximum near early January.
  const double doy = static_cast<double>(day_of_year(date_of(t)));
  const double season = 1.0 + spec.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy - 5.0) / 365.25);
  const double altitude_gain = 1.0 + 0.05 * station.altitude / 1000.0;
  return spec.peak_wm2 * season * altitude_gain * std::sin(phase);
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;

  Rng site_rng = substream(spec.seed, "synth.stations");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> station_bias;
  std::vector<double> regime;
  for (int s = 0; s < spec.stations; ++s) {
    Station st;
    st.id = s + 1;
    char name[32];
    std::snprintf(name, sizeof name, "Synthetic %02d", st.id);
    st.name = name;
    st.latitude = -31.5 + 3.5 * u01(site_rng);
    st.longitude = -71.5 + 1.1 * u01(site_rng);
    st.altitude = 50.0 + 2100.0 * u01(site_rng);
    st.region = st.latitude > -29.5 ? "III" : "IV";
    // Alternate cloud regimes so stations fall into distinct climates.
    regime.push_back(s % 2 == 0 ? -spec.regime_offset : spec.regime_offset);
    station_bias.push_back(spec.bias * (1.0 + spec.bias_spread * (2.0 * u01(site_rng) - 1.0)));
    out.stations.push_back(std::move(st));
  }

  // Observations cover every init day plus the two days reached by lead 48.
  const int obs_days = spec.days + 2;
  std::normal_distribution<double> gauss(0.0, 1.0);
  // signal[s][hour index]
  std::vector<std::vector<double>> signal(static_cast<std::size_t>(spec.stations));
  std::vector<std::vector<double>> sky(static_cast<std::size_t>(spec.stations));
  for (int s = 0; s < spec.stations; ++s) {
    Rng rng = substream(spec.seed, "synth.truth", {s});
    const auto& st = out.stations[static_cast<std::size_t>(s)];
    double latent = gauss(rng);
    auto& sig = signal[static_cast<std::size_t>(s)];
    auto& cs = sky[static_cast<std::size_t>(s)];
    sig.resize(static_cast<std::size_t>(obs_days * 24));
    cs.resize(sig.size());
    for (int d = 0; d < obs_days; ++d) {
      latent = spec.attenuation_ar * latent + std::sqrt(1.0 - spec.attenuation_ar * spec.attenuation_ar) * gauss(rng);
      const double att =
          spec.attenuation_min + (1.0 - spec.attenuation_min) / (1.0 + std::exp(-(latent + regime[static_cast<std::size_t>(s)])));
      for (int h = 0; h < 24; ++h) {
        const TimePoint t = midnight(spec.start_date + std::chrono::days(d)) + std::chrono::hours(h);
        const auto i = static_cast<std::size_t>(d * 24 + h);
        cs[i] = clear_sky(spec, st, t);
        sig[i] = cs[i] * att;
        const double y = cs[i] > 0 ? std::max(0.0, sig[i] + cs[i] * spec.noise_scale * gauss(rng)) : 0.0;
        out.observations.push_back({st.id, t, y});
      }
    }
  }

  for (int d = 0; d < spec.days; ++d) {
    const TimePoint init = midnight(spec.start_date + std::chrono::days(d));
    for (int s = 0; s < spec.stations; ++s) {
      Rng rng = substream(spec.seed, "synth.members", {s, d});
      const double b = station_bias[static_cast<std::size_t>(s)];
      for (int lead = 1; lead <= kMaxLead; ++lead) {
        const auto i = static_cast<std::size_t>(d * 24 + lead);
        const double cs = sky[static_cast<std::size_t>(s)][i];
        ForecastRecord f;
        f.station_id = out.stations[static_cast<std::size_t>(s)].id;
        f.init_time = init;
        f.lead_h = lead;
        const double center_noise = gauss(rng);
        const double center =
            signal[static_cast<std::size_t>(s)][i] + cs * spec.center_error * (lead / 48.0) * center_noise;
        for (auto& m : f.members) {
          const double z = gauss(rng);
          m = cs > 0 ? std::max(0.0, (1.0 + b) * center + spec.dispersion * cs * spec.noise_scale * z) : 0.0;
        }
        out.forecasts.push_back(f);
      }
    }
  }
  return out;
}

}  // namespace solarcal::synth
