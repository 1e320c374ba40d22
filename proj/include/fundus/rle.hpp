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
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "json.hpp"

namespace fundus {

// Row-major run lengths over an H x W mask. counts alternate background and
// foreground runs and always start with a (possibly zero) background run.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;

  bool operator==(const Rle&) const = default;
};

inline Rle rle_encode(const BinaryMask& m) {
  Rle r{m.height(), m.width(), {}};
  std::uint8_t current = 0;
  std::int64_t run = 0;
  for (std::uint8_t bit : m.bits()) {
    if (bit != current) {
      r.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  r.counts.push_back(run);
  return r;
}

inline BinaryMask rle_decode(const Rle& r) {
  if (r.height < 0 || r.width < 0)
    fail(Errc::validation, "rle size must be non-negative");
  BinaryMask m(r.width, r.height);
  auto bits = m.bits();
  std::int64_t pos = 0;
  const auto total = static_cast<std::int64_t>(bits.size());
  bool on = false;
  for (std::int64_t run : r.counts) {
    if (run < 0 || pos + run > total)
      fail(Errc::validation, "rle counts overrun the mask size");
    if (on)
      std::fill(bits.begin() + pos, bits.begin() + pos + run, std::uint8_t{1});
    pos += run;
    on = !on;
  }
  if (pos != total) fail(Errc::validation, "rle counts do not cover the mask");
  return m;
}

inline std::int64_t rle_area(const Rle& r) {
  std::int64_t a = 0;
  for (std::size_t i = 1; i < r.counts.size(); i += 2) a += r.counts[i];
  return a;
}

inline void to_json(nlohmann::json& j, const Rle& r) {
  j = nlohmann::json{{"size", {r.height, r.width}}, {"counts", r.counts}};
}

inline void from_json(const nlohmann::json& j, Rle& r) {
  const auto& size = j.at("size");
  if (!size.is_array() || size.size() != 2)
    fail(Errc::parse, "rle size must be [H, W]");
  r.height = size[0].get<int>();
  r.width = size[1].get<int>();
  r.counts = j.at("counts").get<std::vector<std::int64_t>>();
}

}  // namespace fundus
