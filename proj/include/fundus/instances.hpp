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
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "fundus/rle.hpp"
#include "json.hpp"

namespace fundus {

enum class LesionClass : int { exudate = 1, microaneurysm = 2 };

inline constexpr LesionClass kLesionClasses[] = {LesionClass::exudate,
                                                 LesionClass::microaneurysm};

inline bool is_lesion_class(int id) { return id == 1 || id == 2; }

inline LesionClass lesion_class_from_int(int id) {
  if (!is_lesion_class(id))
    fail(Errc::unknown_category,
         "unknown category id " + std::to_string(id) + " (expected 1 or 2)");
  return static_cast<LesionClass>(id);
}

inline const char* lesion_class_name(LesionClass c) {
  return c == LesionClass::exudate ? "exudate" : "microaneurysm";
}

enum class Connectivity : int { four = 4, eight = 8 };

inline Connectivity connectivity_from_int(int n) {
  require(n == 4 || n == 8, "connectivity must be 4 or 8");
  return static_cast<Connectivity>(n);
}

struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // 0 = background, 1..count in raster order
  int count = 0;
};

namespace detail {

class UnionFind {
 public:
  int make() {
    parent_.push_back(static_cast<int>(parent_.size()));
    return parent_.back();
  }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // smaller provisional label wins
  }

 private:
  std::vector<int> parent_;
};

}  // namespace detail

/// Two-pass union-find labeling. Final labels are dense and numbered in the
/// raster order of each component's first pixel.
inline LabelImage label_components(const BinaryMask& mask, Connectivity conn) {
  const int w = mask.width(), h = mask.height();
  LabelImage out{w, h, std::vector<int>(static_cast<std::size_t>(w) * h, 0), 0};
  detail::UnionFind uf;
  uf.make();  // slot 0 = background

  auto at = [&](int x, int y) -> int& {
    return out.labels[static_cast<std::size_t>(y) * w + x];
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      int neighbours[4];
      int n = 0;
      if (x > 0 && at(x - 1, y)) neighbours[n++] = at(x - 1, y);
      if (y > 0 && at(x, y - 1)) neighbours[n++] = at(x, y - 1);
      if (conn == Connectivity::eight && y > 0) {
        if (x > 0 && at(x - 1, y - 1)) neighbours[n++] = at(x - 1, y - 1);
        if (x + 1 < w && at(x + 1, y - 1)) neighbours[n++] = at(x + 1, y - 1);
      }
      if (n == 0) {
        at(x, y) = uf.make();
        continue;
      }
      int label = *std::min_element(neighbours, neighbours + n);
      for (int i = 0; i < n; ++i) uf.unite(label, neighbours[i]);
      at(x, y) = label;
    }
  }

  std::vector<int> remap;
  for (auto& l : out.labels) {
    if (l == 0) continue;
    const int root = uf.find(l);
    if (static_cast<std::size_t>(root) >= remap.size())
      remap.resize(root + 1, 0);
    if (remap[root] == 0) remap[root] = ++out.count;
    l = remap[root];
  }
  return out;
}

/// Maximal connected components ordered by (top, left) of their bounding
/// box, then by the raster position of their first pixel.
inline std::vector<BinaryMask> connected_components(const BinaryMask& mask,
                                                    Connectivity conn) {
  const LabelImage li = label_components(mask, conn);
  struct Box {
    int top, left, first;
  };
  std::vector<Box> boxes(li.count, Box{mask.height(), mask.width(), -1});
  std::vector<BinaryMask> comps(li.count, BinaryMask(mask.width(), mask.height()));
  for (int y = 0; y < li.height; ++y) {
    for (int x = 0; x < li.width; ++x) {
      const int l = li.labels[static_cast<std::size_t>(y) * li.width + x];
      if (l == 0) continue;
      Box& b = boxes[l - 1];
      b.top = std::min(b.top, y);
      b.left = std::min(b.left, x);
      if (b.first < 0) b.first = y * li.width + x;
      comps[l - 1].set(x, y);
    }
  }
  std::vector<int> order(li.count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(boxes[a].top, boxes[a].left, boxes[a].first) <
           std::tie(boxes[b].top, boxes[b].left, boxes[b].first);
  });
  std::vector<BinaryMask> sorted;
  sorted.reserve(comps.size());
  for (int i : order) sorted.push_back(std::move(comps[i]));
  return sorted;
}

inline Rect bbox_of(const BinaryMask& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.get(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) fail(Errc::no_foreground, "bounding box of an empty mask");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

struct InstanceAnnotation {
  int instance_id = 0;
  std::string image_id;
  LesionClass class_id = LesionClass::exudate;
  Rle mask_rle;
  Rect bbox;
  std::int64_t area = 0;

  bool operator==(const InstanceAnnotation&) const = default;
};

/// Annotation for one already-isolated instance mask.
inline InstanceAnnotation make_annotation(const BinaryMask& instance,
                                          LesionClass class_id,
                                          std::string image_id,
                                          int instance_id) {
  InstanceAnnotation a;
  a.instance_id = instance_id;
  a.image_id = std::move(image_id);
  a.class_id = class_id;
  a.mask_rle = rle_encode(instance);
  a.bbox = bbox_of(instance);
  a.area = static_cast<std::int64_t>(instance.popcount());
  return a;
}

inline std::vector<InstanceAnnotation> build_annotations(
    const BinaryMask& mask, LesionClass class_id, const std::string& image_id,
    Connectivity conn = Connectivity::eight) {
  require(is_lesion_class(static_cast<int>(class_id)), "invalid class id");
  std::vector<InstanceAnnotation> out;
  int next_id = 1;
  for (const auto& comp : connected_components(mask, conn))
    out.push_back(make_annotation(comp, class_id, image_id, next_id++));
  return out;
}

inline void to_json(nlohmann::json& j, const InstanceAnnotation& a) {
  j = nlohmann::json{{"instance_id", a.instance_id},
                     {"image_id", a.image_id},
                     {"class_id", static_cast<int>(a.class_id)},
                     {"mask_rle", a.mask_rle},
                     {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                     {"area", a.area}};
}

inline void from_json(const nlohmann::json& j, InstanceAnnotation& a) {
  a.instance_id = j.at("instance_id").get<int>();
  a.image_id = j.at("image_id").get<std::string>();
  a.class_id = lesion_class_from_int(j.at("class_id").get<int>());
  a.mask_rle = j.at("mask_rle").get<Rle>();
  const auto& b = j.at("bbox");
  a.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
            b.at(3).get<int>()};
  a.area = j.at("area").get<std::int64_t>();
}

/// Checks area and bbox against the decoded mask.
inline void validate_annotation(const InstanceAnnotation& a) {
  const BinaryMask m = rle_decode(a.mask_rle);
  const auto area = static_cast<std::int64_t>(m.popcount());
  const std::string who = "annotation " + std::to_string(a.instance_id) +
                          " of image '" + a.image_id + "'";
  if (area < 1) fail(Errc::validation, who + " has an empty mask");
  if (area != a.area) fail(Errc::validation, who + " area disagrees with mask");
  if (bbox_of(m) != a.bbox)
    fail(Errc::validation, who + " bbox is not the tight mask bbox");
}

}  // namespace fundus
