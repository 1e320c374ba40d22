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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "fundus/instances.hpp"
#include "fundus/rle.hpp"
#include "fundus/rng.hpp"
#include "json.hpp"

namespace fundus {

/// An image travelling together with its instance annotations.
struct Sample {
  Raster image;
  std::vector<InstanceAnnotation> annotations;
  std::string image_id;

  bool operator==(const Sample&) const = default;
};

enum class FlipAxis { horizontal, vertical };
enum class Rotation { cw, ccw };

struct AugmentPolicy {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rot90 = 0.5;
  double max_translate_frac = 0.1;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_hflip) || !prob(p_vflip) || !prob(p_rot90))
      fail(Errc::validation, "augment probabilities must lie in [0, 1]");
    if (!(max_translate_frac >= 0.0))
      fail(Errc::validation, "max_translate_frac must be >= 0");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi))
      fail(Errc::validation, "scale_range must satisfy 0 < lo <= hi");
  }

  bool operator==(const AugmentPolicy&) const = default;
};

inline void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = nlohmann::json{{"p_hflip", p.p_hflip},
                     {"p_vflip", p.p_vflip},
                     {"p_rot90", p.p_rot90},
                     {"max_translate_frac", p.max_translate_frac},
                     {"scale_range", {p.scale_lo, p.scale_hi}},
                     {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  p.p_hflip = j.value("p_hflip", p.p_hflip);
  p.p_vflip = j.value("p_vflip", p.p_vflip);
  p.p_rot90 = j.value("p_rot90", p.p_rot90);
  p.max_translate_frac = j.value("max_translate_frac", p.max_translate_frac);
  if (j.contains("scale_range")) {
    const auto& r = j.at("scale_range");
    if (!r.is_array() || r.size() != 2)
      fail(Errc::parse, "scale_range must be [lo, hi]");
    p.scale_lo = r[0].get<double>();
    p.scale_hi = r[1].get<double>();
  }
  p.seed = j.value("seed", p.seed);
  p.validate();
}

namespace detail {

inline Raster blank_like(const Raster& r, int w, int h) {
  return Raster(w, h, r.channels());
}
inline BinaryMask blank_like(const BinaryMask&, int w, int h) {
  return BinaryMask(w, h);
}
inline void copy_pixel(Raster& dst, int dx, int dy, const Raster& src, int sx,
                       int sy) {
  for (int c = 0; c < src.channels(); ++c) dst.at(dx, dy, c) = src.at(sx, sy, c);
}
inline void copy_pixel(BinaryMask& dst, int dx, int dy, const BinaryMask& src,
                       int sx, int sy) {
  dst.set(dx, dy, src.get(sx, sy));
}

// out(x, y) = in(source(x, y)) for an exact permutation of pixels.
template <class Image, class SourceFn>
Image permute_pixels(const Image& in, int out_w, int out_h, SourceFn source) {
  Image out = blank_like(in, out_w, out_h);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const auto [sx, sy] = source(x, y);
      copy_pixel(out, x, y, in, sx, sy);
    }
  return out;
}

template <class Image>
Image flip_image(const Image& in, FlipAxis axis) {
  const int w = in.width(), h = in.height();
  return permute_pixels(in, w, h, [&](int x, int y) {
    return axis == FlipAxis::horizontal ? std::pair{w - 1 - x, y}
                                        : std::pair{x, h - 1 - y};
  });
}

// Clockwise sends (x, y) to (S-1-y, x).
template <class Image>
Image rotate_image(const Image& in, Rotation dir) {
  const int s = in.width();
  return permute_pixels(in, s, s, [&](int x, int y) {
    return dir == Rotation::cw ? std::pair{y, s - 1 - x}
                               : std::pair{s - 1 - y, x};
  });
}

template <class MaskFn>
std::vector<InstanceAnnotation> transform_annotations(
    const std::vector<InstanceAnnotation>& in, MaskFn fn) {
  std::vector<InstanceAnnotation> out;
  out.reserve(in.size());
  for (const auto& a : in) {
    const BinaryMask m = fn(rle_decode(a.mask_rle));
    if (!m.any()) continue;
    out.push_back(make_annotation(m, a.class_id, a.image_id, a.instance_id));
  }
  return out;
}

}  // namespace detail

inline Sample flip(const Sample& s, FlipAxis axis) {
  Sample out;
  out.image_id = s.image_id;
  out.image = detail::flip_image(s.image, axis);
  out.annotations = detail::transform_annotations(
      s.annotations,
      [&](const BinaryMask& m) { return detail::flip_image(m, axis); });
  return out;
}

inline Sample rotate90(const Sample& s, Rotation dir) {
  require(s.image.width() == s.image.height(),
          "rotate90 needs a square image");
  Sample out;
  out.image_id = s.image_id;
  out.image = detail::rotate_image(s.image, dir);
  out.annotations = detail::transform_annotations(
      s.annotations,
      [&](const BinaryMask& m) { return detail::rotate_image(m, dir); });
  return out;
}

// Forward map about the image centre c = ((W-1)/2, (H-1)/2):
//   x' = c_x + sx * (x - c_x) + dx,   y' = c_y + sy * (y - c_y) + dy.
// Output pixels are pulled through the inverse map; the image is sampled
// bilinearly with black outside the canvas, masks by nearest neighbour.
// Annotations left empty are dropped.
inline Sample translate_scale(const Sample& s, double dx, double dy, double sx,
                              double sy) {
  require(sx > 0.0 && sy > 0.0, "scale factors must be positive");
  const int w = s.image.width(), h = s.image.height();
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  auto src_x = [&](int x) { return cx + (x - dx - cx) / sx; };
  auto src_y = [&](int y) { return cy + (y - dy - cy) / sy; };

  Sample out;
  out.image_id = s.image_id;
  out.image = Raster(w, h, s.image.channels());
  for (int y = 0; y < h; ++y) {
    const double fy = src_y(y);
    const int y0 = static_cast<int>(std::floor(fy));
    const double ay = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = src_x(x);
      const int x0 = static_cast<int>(std::floor(fx));
      const double ax = fx - x0;
      for (int c = 0; c < s.image.channels(); ++c) {
        auto tap = [&](int tx, int ty) -> double {
          if (tx < 0 || ty < 0 || tx >= w || ty >= h) return 0.0;
          return s.image.at(tx, ty, c);
        };
        const double v = (tap(x0, y0) * (1 - ax) + tap(x0 + 1, y0) * ax) * (1 - ay) +
                         (tap(x0, y0 + 1) * (1 - ax) + tap(x0 + 1, y0 + 1) * ax) * ay;
        out.image.at(x, y, c) = detail::saturate_u8(v);
      }
    }
  }

  std::vector<int> xmap(w), ymap(h);
  for (int x = 0; x < w; ++x) xmap[x] = static_cast<int>(std::floor(src_x(x) + 0.5));
  for (int y = 0; y < h; ++y) ymap[y] = static_cast<int>(std::floor(src_y(y) + 0.5));
  out.annotations = detail::transform_annotations(
      s.annotations, [&](const BinaryMask& m) {
        BinaryMask o(m.width(), m.height());
        for (int y = 0; y < m.height(); ++y)
          for (int x = 0; x < m.width(); ++x)
            if (m.contains(xmap[x], ymap[y]) && m.get(xmap[x], ymap[y]))
              o.set(x, y);
        return o;
      });
  return out;
}

/// Parameters drawn for one sample; exposed so callers can log or replay them.
struct AugmentDraw {
  bool hflip = false;
  bool vflip = false;
  bool rotate = false;
  Rotation rotation = Rotation::cw;
  double dx = 0.0;
  double dy = 0.0;
  double sx = 1.0;
  double sy = 1.0;
};

// Draw order from SplitMix64::for_item(seed, index), one uniform each:
// hflip, vflip, rotate, rotation direction (< 0.5 is clockwise), dx, dy, sx,
// sy. All eight are drawn even when an op ends up disabled.
inline AugmentDraw draw_augmentation(const AugmentPolicy& policy,
                                     std::uint64_t index, int width,
                                     int height) {
  auto rng = SplitMix64::for_item(policy.seed, index);
  AugmentDraw d;
  d.hflip = rng.uniform() < policy.p_hflip;
  d.vflip = rng.uniform() < policy.p_vflip;
  d.rotate = rng.uniform() < policy.p_rot90 && width == height;
  d.rotation = rng.uniform() < 0.5 ? Rotation::cw : Rotation::ccw;
  d.dx = (2.0 * rng.uniform() - 1.0) * policy.max_translate_frac * width;
  d.dy = (2.0 * rng.uniform() - 1.0) * policy.max_translate_frac * height;
  d.sx = rng.uniform(policy.scale_lo, policy.scale_hi);
  d.sy = rng.uniform(policy.scale_lo, policy.scale_hi);
  return d;
}

/// Flips, then rotation, then translate/scale. Rotation is skipped for
/// non-square images.
inline Sample apply_policy(const Sample& s, const AugmentPolicy& policy,
                           std::uint64_t index) {
  policy.validate();
  const AugmentDraw d =
      draw_augmentation(policy, index, s.image.width(), s.image.height());
  Sample out = s;
  if (d.hflip) out = flip(out, FlipAxis::horizontal);
  if (d.vflip) out = flip(out, FlipAxis::vertical);
  if (d.rotate) out = rotate90(out, d.rotation);
  if (d.dx != 0.0 || d.dy != 0.0 || d.sx != 1.0 || d.sy != 1.0)
    out = translate_scale(out, d.dx, d.dy, d.sx, d.sy);
  return out;
}

}  // namespace fundus
