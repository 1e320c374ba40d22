// Copyright 2026 The fundus-lesion-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

namespace fundus {

// SplitMix64. Every random draw in the toolkit goes through this generator so
// that splits, augmentations and synthetic fixtures are reproducible from an
// integer seed on any platform. The recurrence is
//
//   state  <- state + 0x9E3779B97F4A7C15            (mod 2^64)
//   z      <- state
//   z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (mod 2^64)
//   z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB  (mod 2^64)
//   output <- z ^ (z >> 31)
//
// uniform() maps the top 53 bits of an output onto [0, 1); below(n) is
// floor(output * n / 2^64) computed with a 128-bit product.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for item `index` of a seeded sequence: the state is
  /// initialised to mix(seed ^ mix(index + kGamma)).
  static constexpr SplitMix64 for_item(std::uint64_t seed,
                                       std::uint64_t index) {
    return SplitMix64(mix(seed ^ mix(index + kGamma)));
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t next() {
    state_ += kGamma;
    return mix(state_);
  }

  constexpr double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  constexpr std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Uniform integer in [lo, hi].
  constexpr int between(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace fundus
