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

// Synthetic irradiance ensembles with controllable bias and dispersion.
//
// For station s and valid time t the forecast-known signal is
//   A(t) = clear_sky(t) * attenuation(s, day(t))
// and the observation is max(0, A + clear_sky * noise_scale * z0). Members
// of a forecast with lead L are
//   max(0, (1 + bias_s) * (A + clear_sky * center_error * L/48 * xi)
//          + dispersion * clear_sky * noise_scale * z_k).
// With bias = 0, dispersion = 1 and center_error = 0 the observation and the
// eight members are exchangeable, so the ensemble is calibrated.

#pragma once

#include <cstdint>
#include <vector>

#include "solarcal/data_model.hpp"

namespace solarcal::synth {

struct SyntheticSpec {
  int stations = 10;
  int days = 210;
  Date start_date = Date(std::chrono::year{2021} / std::chrono::January / 1);

  // Diurnal clear-sky profile (UTC hours; daylight between sunrise and sunset).
  double peak_wm2 = 1000.0;
  double sunrise_utc = 10.5;
  double sunset_utc = 23.0;
  double seasonal_amplitude = 0.15;

  // Daily attenuation: min + (1 - min) * logistic(latent), latent AR(1).
  double attenuation_min = 0.35;
  double attenuation_ar = 0.7;
  double regime_offset = 1.5;  // half the stations cloudier, half clearer

  double noise_scale = 0.12;   // observation noise as a fraction of clear sky
  double center_error = 0.0;   // extra forecast-center error at lead 48

  double bias = 0.25;          // members overestimate by this fraction
  double bias_spread = 0.3;    // station bias = bias * (1 + spread * U(-1,1))
  double dispersion = 0.5;     // member spread relative to the truth's noise

  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  std::vector<Station> stations;
  std::vector<ForecastRecord> forecasts;
  std::vector<Observation> observations;
};

/// Clear-sky irradiance at a UTC time for a station.
double clear_sky(const SyntheticSpec& spec, const Station& station, TimePoint t);

SyntheticData generate(const SyntheticSpec& spec);

}  // namespace solarcal::synth
