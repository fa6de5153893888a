// Copyright 2026 The Dialobias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DIALOBIAS_RNG_H_
#define DIALOBIAS_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace dialobias {

inline constexpr std::uint64_t kDefaultSeed = 20210601;

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream per (seed, key); used to make per-conversation work
// order-independent.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t key) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(key + 0x632be59bd9b4e019ULL)));
}

inline Rng stream_rng(std::uint64_t seed, std::string_view key) {
  return stream_rng(seed, fnv1a64(key));
}

// Uniform index in [0, n). Rejection sampling keeps the result identical
// across standard library implementations.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace dialobias

#endif  // DIALOBIAS_RNG_H_
