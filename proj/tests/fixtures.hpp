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

#include "fundus/image.hpp"
#include "fundus/rng.hpp"

namespace fixture {

/// RGB canvas with a filled ellipse (pixel centres inside) of constant colour.
inline fundus::Raster ellipse_raster(int w, int h, double cx, double cy,
                                     double rx, double ry,
                                     std::uint8_t value = 180) {
  fundus::Raster img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
      if (u * u + v * v <= 1.0)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = value;
    }
  return img;
}

inline fundus::BinaryMask random_mask(fundus::SplitMix64& rng, int w, int h,
                                      double density) {
  fundus::BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rng.uniform() < density) m.set(x, y);
  return m;
}

inline fundus::Raster random_raster(fundus::SplitMix64& rng, int w, int h,
                                    int channels) {
  fundus::Raster img(w, h, channels);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

inline fundus::BinaryMask square_mask(int w, int h, int x0, int y0, int side) {
  fundus::BinaryMask m(w, h);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m.set(x, y);
  return m;
}

}  // namespace fixture
