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

// UTC-only timestamps and calendar dates. No local-time conversion exists
// anywhere in the toolkit.

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace solarcal {

using TimePoint = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (trailing Z optional). nullopt on failure.
std::optional<TimePoint> try_parse_utc(std::string_view text);
/// Parses `YYYY-MM-DD`. nullopt on failure.
std::optional<Date> try_parse_date(std::string_view text);

std::string format_utc(TimePoint t);
std::string format_date(Date d);

inline Date date_of(TimePoint t) { return std::chrono::floor<std::chrono::days>(t); }
inline TimePoint midnight(Date d) { return TimePoint(d); }
inline int hour_of_day(TimePoint t) {
  return static_cast<int>(std::chrono::duration_cast<std::chrono::hours>(t - midnight(date_of(t))).count());
}
/// Day of year, 1-based.
int day_of_year(Date d);

}  // namespace solarcal
