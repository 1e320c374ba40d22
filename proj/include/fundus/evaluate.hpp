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
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/image.hpp"
#include "fundus/instances.hpp"
#include "fundus/rle.hpp"
#include "json.hpp"

namespace fundus {

struct DetectionRecord {
  std::string image_id;
  LesionClass class_id = LesionClass::exudate;
  double score = 0.0;
  std::optional<Rle> mask_rle;
  std::optional<Rect> bbox;

  bool operator==(const DetectionRecord&) const = default;
};

inline void validate_detection(const DetectionRecord& d) {
  if (!(d.score >= 0.0 && d.score <= 1.0))
    fail(Errc::validation, "detection score must lie in [0, 1]");
  if (!d.mask_rle && !d.bbox)
    fail(Errc::validation, "detection needs a mask_rle or a bbox");
  if (d.bbox && (d.bbox->w < 1 || d.bbox->h < 1))
    fail(Errc::validation, "detection bbox must have w, h >= 1");
  if (d.mask_rle && d.bbox) {
    const BinaryMask m = rle_decode(*d.mask_rle);
    if (!m.any() || bbox_of(m) != *d.bbox)
      fail(Errc::validation,
           "detection bbox is not the tight bbox of its mask");
  }
}

inline void to_json(nlohmann::json& j, const DetectionRecord& d) {
  j = nlohmann::json{{"image_id", d.image_id},
                     {"class_id", static_cast<int>(d.class_id)},
                     {"score", d.score}};
  if (d.mask_rle) j["mask_rle"] = *d.mask_rle;
  if (d.bbox) j["bbox"] = {d.bbox->x, d.bbox->y, d.bbox->w, d.bbox->h};
}

inline void from_json(const nlohmann::json& j, DetectionRecord& d) {
  d.image_id = j.at("image_id").get<std::string>();
  d.class_id = lesion_class_from_int(j.at("class_id").get<int>());
  d.score = j.at("score").get<double>();
  d.mask_rle.reset();
  d.bbox.reset();
  if (j.contains("mask_rle") && !j.at("mask_rle").is_null())
    d.mask_rle = j.at("mask_rle").get<Rle>();
  if (j.contains("bbox") && !j.at("bbox").is_null()) {
    const auto& b = j.at("bbox");
    d.bbox = Rect{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                  b.at(3).get<int>()};
  }
}

inline std::vector<DetectionRecord> predictions_from_json(const nlohmann::json& j) {
  std::vector<DetectionRecord> out;
  try {
    if (!j.is_array()) fail(Errc::parse, "predictions must be a JSON list");
    for (const auto& e : j) out.push_back(e.get<DetectionRecord>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed predictions: ") + e.what());
  }
  for (const auto& d : out) validate_detection(d);
  return out;
}

inline std::vector<DetectionRecord> read_predictions(
    const std::filesystem::path& path) {
  return predictions_from_json(
      parse_json_text(read_text_file(path), path.string()));
}

enum class IouMode { mask, bbox };

inline const char* iou_mode_name(IouMode m) {
  return m == IouMode::mask ? "mask" : "bbox";
}

inline IouMode iou_mode_from_string(const std::string& s) {
  if (s == "mask") return IouMode::mask;
  if (s == "bbox") return IouMode::bbox;
  fail(Errc::validation, "iou_mode must be 'mask' or 'bbox', got '" + s + "'");
}

struct EvalConfig {
  std::vector<double> thresholds{0.35, 0.50, 0.75};
  IouMode iou_mode = IouMode::mask;
  double min_score = 0.35;
  bool apply_type_filter = true;

  void validate() const {
    if (thresholds.empty()) fail(Errc::validation, "no IoU thresholds given");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0))
        fail(Errc::validation, "IoU thresholds must lie in (0, 1]");
      if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
        fail(Errc::validation, "IoU thresholds must be sorted ascending");
    }
    if (!(min_score >= 0.0 && min_score <= 1.0))
      fail(Errc::validation, "min_score must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = nlohmann::json{{"thresholds", c.thresholds},
                     {"iou_mode", iou_mode_name(c.iou_mode)},
                     {"min_score", c.min_score},
                     {"apply_type_filter", c.apply_type_filter}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  c.thresholds = j.value("thresholds", c.thresholds);
  if (j.contains("iou_mode"))
    c.iou_mode = iou_mode_from_string(j.at("iou_mode").get<std::string>());
  c.min_score = j.value("min_score", c.min_score);
  c.apply_type_filter = j.value("apply_type_filter", c.apply_type_filter);
  c.validate();
}

// ---------------------------------------------------------------------------
// IoU

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.width() == b.width() && a.height() == b.height(),
          "mask_iou needs masks of equal size");
  std::size_t inter = 0, uni = 0;
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  if (uni == 0) fail(Errc::undefined_iou, "IoU of two empty masks");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double bbox_iou(const Rect& a, const Rect& b) {
  require(a.w >= 1 && a.h >= 1 && b.w >= 1 && b.h >= 1,
          "bbox_iou needs w, h >= 1");
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  return inter / (static_cast<double>(a.area()) + b.area() - inter);
}

/// Instance footprint restricted to its bounding box, so IoU between sparse
/// lesions never touches full-frame buffers.
struct Region {
  Rect box;
  BinaryMask local;
  std::int64_t area = 0;

  static Region from_rle(const Rle& r) {
    Region out;
    int x0 = r.width, y0 = r.height, x1 = -1, y1 = -1;
    std::int64_t pos = 0;
    for (std::size_t i = 0; i < r.counts.size(); ++i) {
      if (i % 2 == 1 && r.counts[i] > 0) {
        const std::int64_t first = pos, last = pos + r.counts[i] - 1;
        const int fy = static_cast<int>(first / r.width);
        const int ly = static_cast<int>(last / r.width);
        y0 = std::min(y0, fy);
        y1 = std::max(y1, ly);
        if (fy != ly) {
          x0 = 0;
          x1 = r.width - 1;
        } else {
          x0 = std::min(x0, static_cast<int>(first % r.width));
          x1 = std::max(x1, static_cast<int>(last % r.width));
        }
        out.area += r.counts[i];
      }
      pos += r.counts[i];
    }
    if (pos != static_cast<std::int64_t>(r.width) * r.height)
      fail(Errc::validation, "rle counts do not cover the mask");
    if (out.area == 0) return out;
    out.box = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    out.local = BinaryMask(out.box.w, out.box.h);
    pos = 0;
    for (std::size_t i = 0; i < r.counts.size(); ++i) {
      if (i % 2 == 1)
        for (std::int64_t p = pos; p < pos + r.counts[i]; ++p)
          out.local.set(static_cast<int>(p % r.width) - x0,
                        static_cast<int>(p / r.width) - y0);
      pos += r.counts[i];
    }
    return out;
  }

  static Region from_box(const Rect& b) {
    Region out;
    out.box = b;
    out.local = BinaryMask(b.w, b.h);
    for (auto& v : out.local.bits()) v = 1;
    out.area = b.area();
    return out;
  }

  bool at(int x, int y) const {
    return x >= box.x && y >= box.y && x < box.x + box.w &&
           y < box.y + box.h && local.get(x - box.x, y - box.y);
  }
};

inline double region_iou(const Region& a, const Region& b) {
  if (a.area == 0 && b.area == 0)
    fail(Errc::undefined_iou, "IoU of two empty masks");
  if (a.area == 0 || b.area == 0) return 0.0;
  const int x0 = std::max(a.box.x, b.box.x);
  const int y0 = std::max(a.box.y, b.box.y);
  const int x1 = std::min(a.box.x + a.box.w, b.box.x + b.box.w);
  const int y1 = std::min(a.box.y + a.box.h, b.box.y + b.box.h);
  std::int64_t inter = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) inter += a.at(x, y) && b.at(x, y);
  return static_cast<double>(inter) /
         static_cast<double>(a.area + b.area - inter);
}

inline Region detection_region(const DetectionRecord& d) {
  return d.mask_rle ? Region::from_rle(*d.mask_rle) : Region::from_box(*d.bbox);
}

inline Rect detection_box(const DetectionRecord& d) {
  return d.bbox ? *d.bbox : bbox_of(rle_decode(*d.mask_rle));
}

/// iou[p][g] between every prediction and every ground-truth instance. In
/// mask mode a prediction without a mask is scored as its filled bbox.
inline std::vector<std::vector<double>> iou_matrix(
    const std::vector<DetectionRecord>& preds,
    const std::vector<InstanceAnnotation>& gts, IouMode mode) {
  std::vector<std::vector<double>> iou(preds.size(),
                                       std::vector<double>(gts.size(), 0.0));
  if (mode == IouMode::bbox) {
    for (std::size_t p = 0; p < preds.size(); ++p) {
      const Rect pb = detection_box(preds[p]);
      for (std::size_t g = 0; g < gts.size(); ++g)
        iou[p][g] = bbox_iou(pb, gts[g].bbox);
    }
    return iou;
  }
  std::vector<Region> gt_regions;
  gt_regions.reserve(gts.size());
  for (const auto& g : gts) gt_regions.push_back(Region::from_rle(g.mask_rle));
  for (std::size_t p = 0; p < preds.size(); ++p) {
    const Region pr = detection_region(preds[p]);
    for (std::size_t g = 0; g < gts.size(); ++g)
      iou[p][g] = region_iou(pr, gt_regions[g]);
  }
  return iou;
}

// ---------------------------------------------------------------------------
// Filtering, matching, AP

inline std::vector<DetectionRecord> filter_by_annotated_type(
    const std::vector<DetectionRecord>& preds, LesionClass hint) {
  std::vector<DetectionRecord> out;
  std::copy_if(preds.begin(), preds.end(), std::back_inserter(out),
               [&](const DetectionRecord& d) { return d.class_id == hint; });
  return out;
}

struct Matching {
  std::vector<std::size_t> rank;       // prediction indices, best score first
  std::vector<bool> is_tp;             // parallel to rank
  std::vector<int> matched_gt;         // parallel to rank, -1 when FP
  std::size_t num_gt = 0;

  std::size_t tp() const {
    return static_cast<std::size_t>(std::count(is_tp.begin(), is_tp.end(), true));
  }
  std::size_t fp() const { return is_tp.size() - tp(); }
  std::size_t fn() const { return num_gt - tp(); }
};

/// Greedy matching on a precomputed IoU matrix. Predictions are visited by
/// descending score (equal scores keep input order); each takes the unmatched
/// same-class ground truth with the highest IoU (lowest index on ties) and is
/// a true positive when that IoU reaches the threshold.
inline Matching match_with_ious(const std::vector<DetectionRecord>& preds,
                                const std::vector<InstanceAnnotation>& gts,
                                const std::vector<std::vector<double>>& iou,
                                double iou_threshold) {
  Matching m;
  m.num_gt = gts.size();
  m.rank.resize(preds.size());
  std::iota(m.rank.begin(), m.rank.end(), std::size_t{0});
  std::stable_sort(m.rank.begin(), m.rank.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t p : m.rank) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != preds[p].class_id) continue;
      if (iou[p][g] > best_iou) {
        best_iou = iou[p][g];
        best = static_cast<int>(g);
      }
    }
    const bool tp = best >= 0 && best_iou >= iou_threshold;
    if (tp) taken[best] = true;
    m.is_tp.push_back(tp);
    m.matched_gt.push_back(tp ? best : -1);
  }
  return m;
}

inline Matching match_detections(const std::vector<DetectionRecord>& preds,
                                 const std::vector<InstanceAnnotation>& gts,
                                 double iou_threshold, IouMode mode) {
  return match_with_ious(preds, gts, iou_matrix(preds, gts, mode),
                         iou_threshold);
}

/// All-point interpolated area under the precision/recall curve of a ranked
/// TP/FP sequence: sum over recall steps of the best precision reached at
/// that recall or beyond.
inline double ap_from_ranked(const std::vector<bool>& is_tp, std::size_t num_gt) {
  if (num_gt == 0) fail(Errc::invalid_argument, "AP needs at least one GT");
  const std::size_t n = is_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  for (std::size_t i = n; i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_tp[i]) continue;
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// std::nullopt when there is no ground truth: such images are excluded from
/// the mean rather than scored zero.
inline std::optional<double> average_precision(
    const std::vector<DetectionRecord>& preds,
    const std::vector<InstanceAnnotation>& gts, double iou_threshold,
    IouMode mode) {
  if (gts.empty()) return std::nullopt;
  const Matching m = match_detections(preds, gts, iou_threshold, mode);
  return ap_from_ranked(m.is_tp, m.num_gt);
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const MatchCounts&) const = default;
};

struct ImageResult {
  std::string image_id;
  Split split = Split::train;
  std::vector<LesionClass> evaluated_classes;
  std::vector<double> ap;  // one per threshold
};

struct ClassResult {
  std::size_t images = 0;
  std::vector<double> map;  // one per threshold
};

struct EvalReport {
  std::vector<double> thresholds;
  IouMode iou_mode = IouMode::mask;
  std::vector<ImageResult> per_image;
  std::vector<double> map;  // mean of per-image AP, one per threshold
  std::map<LesionClass, ClassResult> per_class;
  std::vector<MatchCounts> counts;  // pooled over images, one per threshold
  std::size_t images_excluded = 0;
};

namespace detail {

// Canonical order for predictions of one image so the report does not
// depend on how the caller ordered its list.
inline bool canonical_less(const DetectionRecord& a, const DetectionRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  const Rect ab = detection_box(a), bb = detection_box(b);
  if (ab != bb)
    return std::tie(ab.y, ab.x, ab.h, ab.w) < std::tie(bb.y, bb.x, bb.h, bb.w);
  const bool am = a.mask_rle.has_value(), bm = b.mask_rle.has_value();
  if (am != bm) return am;
  if (am && a.mask_rle->counts != b.mask_rle->counts)
    return a.mask_rle->counts < b.mask_rle->counts;
  return false;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// min_score filter, per-image type filter (when enabled) keyed on the
/// image's source_class_hint, then per-image AP at every threshold. mAP is the
/// plain mean of per-image APs over the images that have ground truth of an
/// evaluated class; it is 0 when no image qualifies. With `only` set, images
/// of other splits are skipped.
inline EvalReport evaluate_dataset(const DatasetManifest& manifest,
                                   const std::vector<DetectionRecord>& predictions,
                                   const EvalConfig& cfg,
                                   std::optional<Split> only = std::nullopt) {
  cfg.validate();
  const std::size_t nt = cfg.thresholds.size();

  std::map<std::string, std::vector<DetectionRecord>> preds_by_image;
  for (const auto& d : predictions) {
    if (!manifest.find_image(d.image_id))
      fail(Errc::dangling_reference,
           "prediction references unknown image_id '" + d.image_id + "'");
    validate_detection(d);
    if (d.score >= cfg.min_score) preds_by_image[d.image_id].push_back(d);
  }
  std::map<std::string, std::vector<InstanceAnnotation>> gts_by_image;
  for (const auto& a : manifest.annotations)
    gts_by_image[a.image_id].push_back(a);

  EvalReport report;
  report.thresholds = cfg.thresholds;
  report.iou_mode = cfg.iou_mode;
  report.counts.assign(nt, {});
  std::vector<std::vector<double>> pooled(nt);
  std::map<LesionClass, std::vector<std::vector<double>>> class_aps;

  for (const auto& img : manifest.images) {
    if (only && img.split != *only) continue;
    std::vector<DetectionRecord> preds = preds_by_image[img.image_id];
    std::vector<InstanceAnnotation> gts = gts_by_image[img.image_id];
    if (cfg.apply_type_filter) {
      preds = filter_by_annotated_type(preds, img.source_class_hint);
      std::erase_if(gts, [&](const InstanceAnnotation& a) {
        return a.class_id != img.source_class_hint;
      });
    }
    if (gts.empty()) {
      ++report.images_excluded;
      continue;
    }
    std::stable_sort(preds.begin(), preds.end(), detail::canonical_less);

    ImageResult result;
    result.image_id = img.image_id;
    result.split = img.split;
    for (LesionClass c : kLesionClasses)
      if (std::any_of(gts.begin(), gts.end(),
                      [&](const auto& a) { return a.class_id == c; }))
        result.evaluated_classes.push_back(c);

    const auto iou = iou_matrix(preds, gts, cfg.iou_mode);
    for (std::size_t t = 0; t < nt; ++t) {
      const Matching m = match_with_ious(preds, gts, iou, cfg.thresholds[t]);
      result.ap.push_back(ap_from_ranked(m.is_tp, m.num_gt));
      report.counts[t].tp += m.tp();
      report.counts[t].fp += m.fp();
      report.counts[t].fn += m.fn();
      pooled[t].push_back(result.ap.back());
    }

    for (LesionClass c : result.evaluated_classes) {
      const auto cp = filter_by_annotated_type(preds, c);
      std::vector<InstanceAnnotation> cg;
      std::copy_if(gts.begin(), gts.end(), std::back_inserter(cg),
                   [&](const auto& a) { return a.class_id == c; });
      const auto ciou = iou_matrix(cp, cg, cfg.iou_mode);
      auto& aps = class_aps[c];
      aps.resize(nt);
      for (std::size_t t = 0; t < nt; ++t) {
        const Matching m = match_with_ious(cp, cg, ciou, cfg.thresholds[t]);
        aps[t].push_back(ap_from_ranked(m.is_tp, m.num_gt));
      }
    }
    report.per_image.push_back(std::move(result));
  }

  for (std::size_t t = 0; t < nt; ++t) report.map.push_back(detail::mean(pooled[t]));
  for (auto& [c, aps] : class_aps) {
    ClassResult cr;
    cr.images = aps.empty() ? 0 : aps[0].size();
    for (const auto& v : aps) cr.map.push_back(detail::mean(v));
    report.per_class[c] = std::move(cr);
  }
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& img : r.per_image) {
    nlohmann::json classes = nlohmann::json::array();
    for (LesionClass c : img.evaluated_classes) classes.push_back(static_cast<int>(c));
    per_image.push_back({{"image_id", img.image_id},
                         {"split", split_name(img.split)},
                         {"classes", classes},
                         {"ap", img.ap}});
  }
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, cr] : r.per_class)
    per_class[lesion_class_name(c)] = {{"class_id", static_cast<int>(c)},
                                       {"images", cr.images},
                                       {"map", cr.map}};
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& c : r.counts)
    counts.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
  return {{"thresholds", r.thresholds},
          {"iou_mode", iou_mode_name(r.iou_mode)},
          {"map", r.map},
          {"per_class", per_class},
          {"counts", counts},
          {"images_evaluated", r.per_image.size()},
          {"images_excluded", r.images_excluded},
          {"per_image", per_image}};
}

/// Column label for a threshold, e.g. 0.35 -> "mAP35".
inline std::string map_column_name(double threshold) {
  return "mAP" + std::to_string(static_cast<int>(std::lround(threshold * 100.0)));
}

/// Table layout: one row per labelled report, columns split then one mAP per
/// threshold.
inline std::string reports_to_csv(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream out;
  if (rows.empty()) return {};
  out << "split";
  for (double t : rows.front().second.thresholds) out << ',' << map_column_name(t);
  out << '\n';
  for (const auto& [label, rep] : rows) {
    out << label;
    for (double v : rep.map) out << ',' << nlohmann::json(v).dump();
    out << '\n';
  }
  return out.str();
}

}  // namespace fundus
