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
#include <cstdint>
#include <string>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "json.hpp"

namespace fundus {

struct PreprocessConfig {
  double blur_sigma = 20.0;
  double w_orig = 4.0;
  double w_blur = -4.0;
  double gamma_offset = 128.0;
  int output_side = 1024;
  int blank_threshold = 10;
  int dilation_kernel = 5;
  int dilation_iterations = 2;

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) fail(Errc::validation, what);
    };
    check(blur_sigma > 0.0, "blur_sigma must be > 0");
    check(output_side >= 32, "output_side must be >= 32");
    check(dilation_kernel >= 1 && dilation_kernel % 2 == 1,
          "dilation_kernel must be odd and >= 1");
    check(dilation_iterations >= 0, "dilation_iterations must be >= 0");
    check(blank_threshold >= 0 && blank_threshold <= 255,
          "blank_threshold must be in [0, 255]");
  }

  bool operator==(const PreprocessConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const PreprocessConfig& c) {
  j = nlohmann::json{{"blur_sigma", c.blur_sigma},
                     {"w_orig", c.w_orig},
                     {"w_blur", c.w_blur},
                     {"gamma_offset", c.gamma_offset},
                     {"output_side", c.output_side},
                     {"blank_threshold", c.blank_threshold},
                     {"dilation_kernel", c.dilation_kernel},
                     {"dilation_iterations", c.dilation_iterations}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, PreprocessConfig& c) {
  if (!j.is_object()) fail(Errc::parse, "preprocess config must be an object");
  c.blur_sigma = j.value("blur_sigma", c.blur_sigma);
  c.w_orig = j.value("w_orig", c.w_orig);
  c.w_blur = j.value("w_blur", c.w_blur);
  c.gamma_offset = j.value("gamma_offset", c.gamma_offset);
  c.output_side = j.value("output_side", c.output_side);
  c.blank_threshold = j.value("blank_threshold", c.blank_threshold);
  c.dilation_kernel = j.value("dilation_kernel", c.dilation_kernel);
  c.dilation_iterations = j.value("dilation_iterations", c.dilation_iterations);
  c.validate();
}

/// Composite crop + anisotropic scale that takes a source raster onto the
/// square output grid. Points use pixel-index coordinates (pixel centres at
/// integers).
struct GeometricTransform {
  Rect crop_rect;
  double scale_x = 1.0;
  double scale_y = 1.0;
  int output_side = 0;

  Point apply(Point p) const {
    return {(p.x - crop_rect.x + 0.5) * scale_x - 0.5,
            (p.y - crop_rect.y + 0.5) * scale_y - 0.5};
  }

  bool operator==(const GeometricTransform&) const = default;
};

inline void to_json(nlohmann::json& j, const GeometricTransform& t) {
  j = nlohmann::json{
      {"crop_rect",
       {t.crop_rect.x, t.crop_rect.y, t.crop_rect.w, t.crop_rect.h}},
      {"scale_x", t.scale_x},
      {"scale_y", t.scale_y},
      {"output_side", t.output_side}};
}

inline void from_json(const nlohmann::json& j, GeometricTransform& t) {
  const auto& r = j.at("crop_rect");
  t.crop_rect = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                 r.at(3).get<int>()};
  t.scale_x = j.at("scale_x").get<double>();
  t.scale_y = j.at("scale_y").get<double>();
  t.output_side = j.at("output_side").get<int>();
}

/// Normalised 1-D Gaussian taps, truncated at radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  require(sigma > 0.0, "gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur per channel with edge-replicated borders. The two
/// passes accumulate in double and round once at the end.
inline Raster gaussian_blur(const Raster& img, double sigma) {
  require(sigma > 0.0, "gaussian sigma must be positive");
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width(), h = img.height(), ch = img.channels();

  Raster out(w, h, ch);
  std::vector<double> rows(static_cast<std::size_t>(w) * h);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int sx = std::clamp(x + k, 0, w - 1);
          acc += kernel[k + radius] * img.at(sx, y, c);
        }
        rows[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int sy = std::clamp(y + k, 0, h - 1);
          acc += kernel[k + radius] * rows[static_cast<std::size_t>(sy) * w + x];
        }
        out.at(x, y, c) = detail::saturate_u8(acc);
      }
    }
  }
  return out;
}

/// clamp(w_orig * original + w_blur * blurred + gamma_offset) for one sample.
inline std::uint8_t blend_sample(std::uint8_t original, std::uint8_t blurred,
                                 const PreprocessConfig& cfg) {
  return detail::saturate_u8(cfg.w_orig * original + cfg.w_blur * blurred +
                             cfg.gamma_offset);
}

inline Raster blend_normalize(const Raster& img, const PreprocessConfig& cfg) {
  require(!img.empty(), "blend_normalize needs a nonempty raster");
  const Raster blurred = gaussian_blur(img, cfg.blur_sigma);
  Raster out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto blr = blurred.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = blend_sample(src[i], blr[i], cfg);
  return out;
}

inline Raster crop(const Raster& img, const Rect& r) {
  require(r.x >= 0 && r.y >= 0 && r.w >= 1 && r.h >= 1 &&
              r.x + r.w <= img.width() && r.y + r.h <= img.height(),
          "crop rectangle outside raster");
  Raster out(r.w, r.h, img.channels());
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(x, y, c) = img.at(r.x + x, r.y + y, c);
  return out;
}

inline BinaryMask crop(const BinaryMask& m, const Rect& r) {
  require(r.x >= 0 && r.y >= 0 && r.w >= 1 && r.h >= 1 &&
              r.x + r.w <= m.width() && r.y + r.h <= m.height(),
          "crop rectangle outside mask");
  BinaryMask out(r.w, r.h);
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) out.set(x, y, m.get(r.x + x, r.y + y));
  return out;
}

struct CropResult {
  Raster image;
  Rect rect;
};

/// Tightest rectangle around pixels whose max-channel value exceeds the
/// threshold.
inline CropResult crop_blank_margins(const Raster& img, int blank_threshold) {
  int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.max_channel(x, y) > blank_threshold) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) fail(Errc::no_foreground, "image is blank above threshold");
  const Rect r{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  return {crop(img, r), r};
}

/// Bilinear resampling on pixel centres; sample positions are clamped to the
/// source so borders replicate.
inline Raster resize_bilinear(const Raster& img, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, "resize target must be >= 1");
  const int w = img.width(), h = img.height(), ch = img.channels();
  const double fx = double(w) / out_w, fy = double(h) / out_h;
  Raster out(out_w, out_h, ch);
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, double(h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ay = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, double(w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double ax = sx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = img.at(x0, y0, c) * (1 - ax) + img.at(x1, y0, c) * ax;
        const double bot = img.at(x0, y1, c) * (1 - ax) + img.at(x1, y1, c) * ax;
        out.at(x, y, c) = detail::saturate_u8(top * (1 - ay) + bot * ay);
      }
    }
  }
  return out;
}

/// Nearest-neighbour resampling; source index floor((dst + 0.5) * src / dst).
inline BinaryMask resize_nearest(const BinaryMask& m, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, "resize target must be >= 1");
  BinaryMask out(out_w, out_h);
  if (m.width() == 0 || m.height() == 0) return out;
  std::vector<int> xmap(out_w), ymap(out_h);
  for (int x = 0; x < out_w; ++x)
    xmap[x] = std::min(m.width() - 1,
                       static_cast<int>((x + 0.5) * m.width() / out_w));
  for (int y = 0; y < out_h; ++y)
    ymap[y] = std::min(m.height() - 1,
                       static_cast<int>((y + 0.5) * m.height() / out_h));
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out.set(x, y, m.get(xmap[x], ymap[y]));
  return out;
}

inline Raster resize(const Raster& img, int side) {
  require(side >= 1, "resize side must be >= 1");
  return resize_bilinear(img, side, side);
}

inline BinaryMask resize(const BinaryMask& m, int side) {
  require(side >= 1, "resize side must be >= 1");
  return resize_nearest(m, side, side);
}

/// True when the pixel centre lies inside the circle inscribed in a
/// side x side square.
inline bool inside_inscribed_circle(int x, int y, int side) {
  const double half = side / 2.0;
  const double dx = x + 0.5 - half, dy = y + 0.5 - half;
  return dx * dx + dy * dy <= half * half;
}

inline void zero_outside_circle(Raster& img) {
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (!inside_inscribed_circle(x, y, img.width()))
        for (int c = 0; c < img.channels(); ++c) img.at(x, y, c) = 0;
}

inline void zero_outside_circle(BinaryMask& m) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (!inside_inscribed_circle(x, y, m.width())) m.set(x, y, false);
}

struct CircularizeResult {
  Raster image;
  GeometricTransform transform;
};

// Stretches the shorter axis so the margin-cropped eye fills a square of side
// max(W, H), then blanks everything outside the inscribed circle. After the
// stretch the foreground already spans the whole square, so the second crop
// is the identity.
inline CircularizeResult circularize(const Raster& img) {
  require(img.width() >= 2 && img.height() >= 2,
          "circularize needs at least 2x2 pixels");
  const int side = std::max(img.width(), img.height());
  GeometricTransform t;
  t.crop_rect = {0, 0, img.width(), img.height()};
  t.scale_x = double(side) / img.width();
  t.scale_y = double(side) / img.height();
  t.output_side = side;
  Raster out = (img.width() == side && img.height() == side)
                   ? img
                   : resize_bilinear(img, side, side);
  zero_outside_circle(out);
  return {std::move(out), t};
}

/// Morphological dilation by a kernel x kernel square, repeated. The square
/// element is separable: each iteration is a row max then a column max, both
/// evaluated with running prefix counts.
inline BinaryMask dilate(const BinaryMask& mask, int kernel, int iterations) {
  require(kernel >= 1 && kernel % 2 == 1, "dilation kernel must be odd");
  require(iterations >= 0, "dilation iterations must be >= 0");
  const int r = kernel / 2;
  const int w = mask.width(), h = mask.height();
  BinaryMask cur = mask;
  if (r == 0) return cur;
  BinaryMask tmp(w, h);
  std::vector<int> prefix(static_cast<std::size_t>(std::max(w, h)) + 1);

  auto window_any = [&](int i, int n) {
    const int lo = std::max(0, i - r), hi = std::min(n - 1, i + r);
    return prefix[hi + 1] - prefix[lo] > 0;
  };

  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + cur.get(x, y);
      for (int x = 0; x < w; ++x) tmp.set(x, y, window_any(x, w));
    }
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) prefix[y + 1] = prefix[y] + tmp.get(x, y);
      for (int y = 0; y < h; ++y) cur.set(x, y, window_any(y, h));
    }
  }
  return cur;
}

/// Crop + nearest resize + circle mask with a transform produced for the
/// matching image.
inline BinaryMask warp_mask(const BinaryMask& mask,
                            const GeometricTransform& t) {
  BinaryMask out = resize_nearest(crop(mask, t.crop_rect), t.output_side,
                                  t.output_side);
  zero_outside_circle(out);
  return out;
}

struct PreprocessResult {
  Raster image;
  BinaryMask mask;
  GeometricTransform transform;
};

/// crop -> circularize -> blend_normalize -> resize for the image; the mask
/// follows the same composite transform with nearest sampling and is dilated
/// last.
inline PreprocessResult preprocess_pair(const Raster& img,
                                        const BinaryMask& mask,
                                        const PreprocessConfig& cfg) {
  require(img.width() == mask.width() && img.height() == mask.height(),
          "image and mask dimensions differ");
  cfg.validate();

  auto cropped = crop_blank_margins(img, cfg.blank_threshold);
  auto circ = circularize(cropped.image);
  Raster normalized = blend_normalize(circ.image, cfg);
  Raster out_img = resize(normalized, cfg.output_side);

  GeometricTransform t;
  t.crop_rect = cropped.rect;
  t.scale_x = circ.transform.scale_x * cfg.output_side / circ.transform.output_side;
  t.scale_y = circ.transform.scale_y * cfg.output_side / circ.transform.output_side;
  t.output_side = cfg.output_side;

  BinaryMask out_mask = dilate(warp_mask(mask, t), cfg.dilation_kernel,
                               cfg.dilation_iterations);
  return {std::move(out_img), std::move(out_mask), t};
}

}  // namespace fundus
