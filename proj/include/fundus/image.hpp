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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fundus/error.hpp"

namespace fundus {

namespace detail {

// Round half to even, then clamp to the 8-bit range.
inline std::uint8_t saturate_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

}  // namespace detail

/// Axis-aligned rectangle in pixel units, (x, y) is the top-left corner.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  bool operator==(const Rect&) const = default;
};

/// Row-major interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
class Raster {
 public:
  Raster() = default;

  Raster(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    require(width >= 1 && height >= 1, "raster dimensions must be positive");
    require(channels == 1 || channels == 3, "raster channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
      : Raster(width, height, channels) {
    require(data.size() == data_.size(),
            "raster data length must equal width*height*channels");
    data_ = std::move(data);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int x, int y, int c = 0) {
    return data_[index(x, y, c)];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data_[index(x, y, c)];
  }

  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }

  // Largest sample over the channels at (x, y).
  std::uint8_t max_channel(int x, int y) const {
    const std::size_t base = index(x, y, 0);
    std::uint8_t m = data_[base];
    for (int c = 1; c < channels_; ++c) m = std::max(m, data_[base + c]);
    return m;
  }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// H x W boolean grid. Stored one byte per pixel, values 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(int width, int height) : width_(width), height_(height) {
    require(width >= 0 && height >= 0, "mask dimensions must be non-negative");
    bits_.assign(static_cast<std::size_t>(width) * height, 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }

  bool get(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool on = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<std::uint8_t> bits() { return bits_; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t popcount() const {
    return static_cast<std::size_t>(
        std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool any() const {
    return std::find(bits_.begin(), bits_.end(), std::uint8_t{1}) !=
           bits_.end();
  }

  bool operator==(const BinaryMask&) const = default;

  /// Any nonzero sample in the first channel is foreground.
  static BinaryMask from_raster(const Raster& img) {
    BinaryMask m(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (img.max_channel(x, y) != 0) m.set(x, y);
    return m;
  }

  /// Single-channel raster with foreground at 255.
  Raster to_raster() const {
    Raster r(width_, height_, 1);
    auto out = r.data();
    for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i] ? 255 : 0;
    return r;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
  require(a.width() == b.width() && a.height() == b.height(),
          "mask dimensions differ");
  BinaryMask out = a;
  auto o = out.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] | bb[i];
  return out;
}

inline BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
  require(a.width() == b.width() && a.height() == b.height(),
          "mask dimensions differ");
  BinaryMask out = a;
  auto o = out.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] & bb[i];
  return out;
}

/// Pixel-index centroid of the foreground; undefined for an empty mask.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point centroid(const BinaryMask& m) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.get(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
  if (n == 0) fail(Errc::no_foreground, "centroid of an empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

}  // namespace fundus
