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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace solarcal {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed from a root seed, a stream name and indices.
/// Every random consumer in the toolkit draws from its own named stream so
/// results do not depend on evaluation order.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                                    std::initializer_list<std::int64_t> keys = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = splitmix64(root ^ splitmix64(h));
  for (auto k : keys) s = splitmix64(s ^ static_cast<std::uint64_t>(k));
  return s;
}

inline Rng substream(std::uint64_t root, std::string_view name,
                     std::initializer_list<std::int64_t> keys = {}) {
  return Rng(substream_seed(root, name, keys));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace solarcal
