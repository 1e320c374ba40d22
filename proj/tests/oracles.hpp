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

// Independent reference implementations used only by the tests. Nothing here
// calls into the library code paths it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "fundus/dataset.hpp"
#include "fundus/evaluate.hpp"
#include "fundus/image.hpp"

namespace oracle {

using Grid = std::vector<std::vector<int>>;  // [y][x], 0/1

inline Grid to_grid(const fundus::BinaryMask& m) {
  Grid g(m.height(), std::vector<int>(m.width(), 0));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) g[y][x] = m.get(x, y) ? 1 : 0;
  return g;
}

/// BFS flood fill; returns the label grid (0 background, 1.. in raster order
/// of first pixel) and the component count.
inline std::pair<Grid, int> flood_fill_labels(const Grid& g, int connectivity) {
  const int h = static_cast<int>(g.size());
  const int w = h ? static_cast<int>(g[0].size()) : 0;
  Grid label(h, std::vector<int>(w, 0));
  int count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!g[y][x] || label[y][x]) continue;
      ++count;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      label[y][x] = count;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == 4 && dx != 0 && dy != 0) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!g[ny][nx] || label[ny][nx]) continue;
            label[ny][nx] = count;
            q.push({nx, ny});
          }
      }
    }
  return {label, count};
}

inline double pixel_iou(const Grid& a, const Grid& b) {
  long inter = 0, uni = 0;
  for (std::size_t y = 0; y < a.size(); ++y)
    for (std::size_t x = 0; x < a[y].size(); ++x) {
      inter += a[y][x] && b[y][x];
      uni += a[y][x] || b[y][x];
    }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Dense grid straight from run lengths (row-major, background first).
inline Grid grid_from_rle(const fundus::Rle& r) {
  Grid g(r.height, std::vector<int>(r.width, 0));
  long pos = 0;
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    for (long k = 0; k < r.counts[i]; ++k, ++pos)
      if (i % 2 == 1) g[pos / r.width][pos % r.width] = 1;
  }
  return g;
}

inline Grid grid_from_box(const fundus::Rect& b, int w, int h) {
  Grid g(h, std::vector<int>(w, 0));
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x)
      if (x >= 0 && y >= 0 && x < w && y < h) g[y][x] = 1;
  return g;
}

/// AP from a ranked TP/FP list by brute force over every prefix: for each
/// recall level reached, take the best precision of any prefix whose recall is
/// at least that level.
inline double brute_force_ap(const std::vector<bool>& tp, std::size_t num_gt) {
  const std::size_t n = tp.size();
  std::vector<double> prec(n), rec(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i <= k; ++i) hits += tp[i];
    prec[k] = double(hits) / double(k + 1);
    rec[k] = double(hits) / double(num_gt);
  }
  std::vector<double> levels;
  for (std::size_t k = 0; k < n; ++k)
    if (tp[k]) levels.push_back(rec[k]);
  double ap = 0.0, prev = 0.0;
  for (double r : levels) {
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (rec[k] >= r) best = std::max(best, prec[k]);
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

/// Naive evaluator: dense-grid IoU for every pair, O(P * G) greedy matching
/// with a linear scan per prediction, brute-force AP, plain mean over images.
/// Assumes predictions carry masks (mask mode) and distinct scores.
inline std::vector<double> naive_map(const fundus::DatasetManifest& m,
                                     const std::vector<fundus::DetectionRecord>& preds,
                                     const std::vector<double>& thresholds,
                                     double min_score, bool type_filter) {
  std::vector<double> sums(thresholds.size(), 0.0);
  int images = 0;
  for (const auto& img : m.images) {
    std::vector<const fundus::InstanceAnnotation*> gts;
    for (const auto& a : m.annotations)
      if (a.image_id == img.image_id &&
          (!type_filter || a.class_id == img.source_class_hint))
        gts.push_back(&a);
    if (gts.empty()) continue;
    ++images;
    std::vector<const fundus::DetectionRecord*> ps;
    for (const auto& p : preds)
      if (p.image_id == img.image_id && p.score >= min_score &&
          (!type_filter || p.class_id == img.source_class_hint))
        ps.push_back(&p);
    // selection sort by descending score
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (std::size_t j = i + 1; j < ps.size(); ++j)
        if (ps[j]->score > ps[i]->score) std::swap(ps[i], ps[j]);

    std::vector<Grid> gt_grids;
    for (auto* g : gts) gt_grids.push_back(grid_from_rle(g->mask_rle));
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      std::vector<bool> used(gts.size(), false), tp;
      for (auto* p : ps) {
        const Grid pg = p->mask_rle ? grid_from_rle(*p->mask_rle)
                                    : grid_from_box(*p->bbox, img.width, img.height);
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (used[g] || gts[g]->class_id != p->class_id) continue;
          const double v = pixel_iou(pg, gt_grids[g]);
          if (v > best_iou) {
            best_iou = v;
            best = static_cast<int>(g);
          }
        }
        const bool hit = best >= 0 && best_iou >= thresholds[t];
        if (hit) used[best] = true;
        tp.push_back(hit);
      }
      sums[t] += brute_force_ap(tp, gts.size());
    }
  }
  for (double& s : sums) s = images ? s / images : 0.0;
  return sums;
}

/// Value of the normalised 2-D Gaussian (truncated at ceil(3 sigma)) at the
/// given offset, evaluated directly on the 2-D grid.
inline double gaussian_2d_weight(double sigma, int dx, int dy) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) total += std::exp(-(x * x + y * y) / (2 * sigma * sigma));
  return std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / total;
}

}  // namespace oracle
