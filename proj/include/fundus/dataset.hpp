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
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "fundus/instances.hpp"
#include "fundus/rle.hpp"
#include "fundus/rng.hpp"
#include "json.hpp"

namespace fundus {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(Errc::validation, "unknown split '" + s + "'");
}

struct ImageEntry {
  std::string image_id;
  std::string file_name;
  int width = 0;
  int height = 0;
  // Which lesion type the source dataset annotated for this image.
  LesionClass source_class_hint = LesionClass::exudate;
  Split split = Split::train;

  bool operator==(const ImageEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ImageEntry> images;
  std::vector<InstanceAnnotation> annotations;

  const ImageEntry* find_image(const std::string& id) const {
    for (const auto& img : images)
      if (img.image_id == id) return &img;
    return nullptr;
  }

  bool operator==(const DatasetManifest&) const = default;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + val + test; }
};

/// Fisher-Yates shuffle driven by SplitMix64(seed): for i = n-1 down to 1,
/// swap positions i and below(i + 1). The first `train` shuffled items go to
/// train, the next `val` to val, the rest to test. result[i] is the split of
/// the i-th input id.
inline std::vector<Split> shuffle_split(const std::vector<std::string>& ids,
                                        std::uint64_t seed,
                                        const SplitCounts& counts) {
  if (counts.total() != ids.size())
    fail(Errc::invalid_argument,
         "split counts sum to " + std::to_string(counts.total()) + " but " +
             std::to_string(ids.size()) + " images were given");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i-- > 1;)
    std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<Split> out(ids.size(), Split::test);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (pos < counts.train)
      out[order[pos]] = Split::train;
    else if (pos < counts.train + counts.val)
      out[order[pos]] = Split::val;
  }
  return out;
}

/// Structural checks: unique image ids, no dangling annotation references,
/// annotation masks sized like their image and internally consistent,
/// instance ids unique per image.
inline void validate_manifest(const DatasetManifest& m) {
  std::map<std::string, const ImageEntry*> by_id;
  for (const auto& img : m.images) {
    if (img.image_id.empty()) fail(Errc::validation, "empty image_id");
    if (!by_id.emplace(img.image_id, &img).second)
      fail(Errc::validation, "duplicate image_id '" + img.image_id + "'");
    if (img.width < 1 || img.height < 1)
      fail(Errc::validation, "image '" + img.image_id + "' has no pixels");
  }
  std::set<std::pair<std::string, int>> seen;
  for (const auto& a : m.annotations) {
    auto it = by_id.find(a.image_id);
    if (it == by_id.end())
      fail(Errc::dangling_reference,
           "annotation " + std::to_string(a.instance_id) +
               " references missing image_id '" + a.image_id + "'");
    if (a.instance_id < 1)
      fail(Errc::validation, "instance_id must be positive");
    if (!seen.emplace(a.image_id, a.instance_id).second)
      fail(Errc::validation, "duplicate instance_id " +
                                 std::to_string(a.instance_id) + " in image '" +
                                 a.image_id + "'");
    if (a.mask_rle.width != it->second->width ||
        a.mask_rle.height != it->second->height)
      fail(Errc::validation, "annotation mask size differs from image '" +
                                 a.image_id + "'");
    validate_annotation(a);
  }
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : m.images)
    images.push_back({{"image_id", img.image_id},
                      {"file_name", img.file_name},
                      {"width", img.width},
                      {"height", img.height},
                      {"source_class_hint", static_cast<int>(img.source_class_hint)},
                      {"split", split_name(img.split)}});
  nlohmann::json categories = nlohmann::json::array();
  for (LesionClass c : kLesionClasses)
    categories.push_back({{"id", static_cast<int>(c)}, {"name", lesion_class_name(c)}});
  return {{"images", images},
          {"annotations", m.annotations},
          {"categories", categories}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    if (!j.is_object()) fail(Errc::parse, "manifest must be a JSON object");
    if (j.contains("categories")) {
      for (const auto& c : j.at("categories")) {
        const int id = c.at("id").get<int>();
        const LesionClass lc = lesion_class_from_int(id);
        if (c.at("name").get<std::string>() != lesion_class_name(lc))
          fail(Errc::validation,
               "category " + std::to_string(id) + " has an unexpected name");
      }
    }
    for (const auto& e : j.at("images")) {
      ImageEntry img;
      img.image_id = e.at("image_id").get<std::string>();
      img.file_name = e.at("file_name").get<std::string>();
      img.width = e.at("width").get<int>();
      img.height = e.at("height").get<int>();
      img.source_class_hint =
          lesion_class_from_int(e.at("source_class_hint").get<int>());
      img.split = split_from_string(e.at("split").get<std::string>());
      m.images.push_back(std::move(img));
    }
    for (const auto& a : j.at("annotations"))
      m.annotations.push_back(a.get<InstanceAnnotation>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(Errc::io, "write failed for '" + path.string() + "'");
}

inline nlohmann::json parse_json_text(const std::string& text,
                                      const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::parse, origin + ": " + e.what());
  }
}

inline void write_manifest(const DatasetManifest& m,
                           const std::filesystem::path& path) {
  validate_manifest(m);
  write_text_file(path, manifest_to_json(m).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  return manifest_from_json(parse_json_text(read_text_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Synthetic fundus fixtures

struct SyntheticParams {
  int side = 256;
  int n_exudates = 3;
  int n_mas = 5;
  // Minimum empty gap between lesion outlines, in source pixels.
  int min_gap = 8;
};

struct SyntheticLesion {
  LesionClass kind;
  int cx;
  int cy;
  double semi_major;
  double semi_minor;
  double angle;

  double extent() const { return semi_major; }
};

struct SyntheticFundus {
  Raster image;
  BinaryMask exudates;
  BinaryMask microaneurysms;
  double disc_cx = 0.0;
  double disc_cy = 0.0;
  double disc_radius = 0.0;
  std::vector<SyntheticLesion> lesions;

  const BinaryMask& mask_for(LesionClass c) const {
    return c == LesionClass::exudate ? exudates : microaneurysms;
  }
};

inline bool lesion_covers(const SyntheticLesion& l, int x, int y) {
  const double dx = x - l.cx, dy = y - l.cy;
  const double c = std::cos(l.angle), s = std::sin(l.angle);
  const double u = (dx * c + dy * s) / l.semi_major;
  const double v = (-dx * s + dy * c) / l.semi_minor;
  return u * u + v * v <= 1.0;
}

// Renders an orange disc on a black canvas that is a quarter wider than it is
// tall, with bright elliptical exudates (semi-axes 3..10 px) and dark round
// microaneurysms (radius 1..3 px) at integer centres, fully inside the disc
// and separated by at least params.min_gap pixels.
inline SyntheticFundus generate_synthetic_fundus(std::uint64_t seed,
                                                 const SyntheticParams& params) {
  require(params.side >= 64, "synthetic side must be >= 64");
  require(params.n_exudates >= 0 && params.n_mas >= 0,
          "lesion counts must be non-negative");
  SplitMix64 rng(seed);
  const int height = params.side;
  const int width = params.side + params.side / 4;
  const int jitter = params.side / 32;

  SyntheticFundus f;
  f.disc_radius = 0.42 * params.side;
  f.disc_cx = width / 2.0 + rng.between(-jitter, jitter);
  f.disc_cy = height / 2.0 + rng.between(-jitter, jitter);

  const int total = params.n_exudates + params.n_mas;
  constexpr int kRetries = 2000;
  for (int i = 0; i < total; ++i) {
    SyntheticLesion l{};
    l.kind = i < params.n_exudates ? LesionClass::exudate
                                   : LesionClass::microaneurysm;
    if (l.kind == LesionClass::exudate) {
      const int a = rng.between(3, 10);
      const int b = rng.between(3, a);
      l.semi_major = a;
      l.semi_minor = b;
      l.angle = rng.uniform(0.0, 3.14159265358979323846);
    } else {
      l.semi_major = l.semi_minor = rng.between(1, 3);
      l.angle = 0.0;
    }
    bool placed = false;
    for (int attempt = 0; attempt < kRetries && !placed; ++attempt) {
      const double reach = f.disc_radius - l.extent() - 3.0;
      l.cx = static_cast<int>(std::lround(f.disc_cx + rng.uniform(-reach, reach)));
      l.cy = static_cast<int>(std::lround(f.disc_cy + rng.uniform(-reach, reach)));
      if (std::hypot(l.cx + 0.5 - f.disc_cx, l.cy + 0.5 - f.disc_cy) >
          f.disc_radius - l.extent() - 3.0)
        continue;
      placed = std::all_of(f.lesions.begin(), f.lesions.end(), [&](const auto& o) {
        return std::hypot(double(l.cx - o.cx), double(l.cy - o.cy)) >=
               l.extent() + o.extent() + params.min_gap;
      });
    }
    if (!placed)
      fail(Errc::capacity, "could not place lesion " + std::to_string(i + 1) +
                               " of " + std::to_string(total) + " after " +
                               std::to_string(kRetries) + " attempts");
    f.lesions.push_back(l);
  }

  // Low-frequency illumination ripple.
  const double phase_x = rng.uniform(0.0, 6.283185307179586);
  const double phase_y = rng.uniform(0.0, 6.283185307179586);

  f.image = Raster(width, height, 3);
  f.exudates = BinaryMask(width, height);
  f.microaneurysms = BinaryMask(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double r =
          std::hypot(x + 0.5 - f.disc_cx, y + 0.5 - f.disc_cy) / f.disc_radius;
      if (r > 1.0) continue;
      const double shade = 1.0 - 0.35 * r * r;
      const double ripple = 8.0 * std::sin(x * 0.05 + phase_x) *
                            std::cos(y * 0.04 + phase_y);
      f.image.at(x, y, 0) = detail::saturate_u8(190.0 * shade + ripple);
      f.image.at(x, y, 1) = detail::saturate_u8(95.0 * shade + ripple * 0.5);
      f.image.at(x, y, 2) = detail::saturate_u8(35.0 * shade);
    }
  }
  for (const auto& l : f.lesions) {
    const int reach = static_cast<int>(std::ceil(l.extent()));
    const bool ex = l.kind == LesionClass::exudate;
    BinaryMask& mask = ex ? f.exudates : f.microaneurysms;
    for (int y = l.cy - reach; y <= l.cy + reach; ++y)
      for (int x = l.cx - reach; x <= l.cx + reach; ++x) {
        if (!mask.contains(x, y) || !lesion_covers(l, x, y)) continue;
        mask.set(x, y);
        if (ex) {
          f.image.at(x, y, 0) = 245;
          f.image.at(x, y, 1) = 225;
          f.image.at(x, y, 2) = 110;
        } else {
          f.image.at(x, y, 0) = 90;
          f.image.at(x, y, 1) = 25;
          f.image.at(x, y, 2) = 12;
        }
      }
  }
  return f;
}

}  // namespace fundus
