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
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/evaluate.hpp"
#include "fundus/instances.hpp"
#include "fundus/modelconfig.hpp"
#include "fundus/png_io.hpp"
#include "fundus/preprocess.hpp"
#include "fundus/rng.hpp"
#include "json.hpp"

namespace fundus::cli {

namespace fs = std::filesystem;

enum ExitStatus : int {
  kSuccess = 0,
  kValidationFailure = 1,
  kIoFailure = 2,
  kInternalError = 3,
};

inline ExitStatus exit_status_for(Errc code) {
  return code == Errc::io ? kIoFailure : kValidationFailure;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The exception of the
/// lowest failing index is rethrown, so failures are reported the same way
/// regardless of scheduling.
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Sorted list of *.png files directly inside `dir`.
inline std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    fail(Errc::io, "not a directory: '" + dir.string() + "'");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create '" + dir.string() + "': " + ec.message());
}

inline void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// prep

struct PrepOptions {
  fs::path in_dir;
  fs::path mask_dir;
  fs::path out_dir;
  std::optional<fs::path> config_path;
  // JSON object mapping image file names to mask file names. Without it,
  // images pair with the mask of the same file name.
  std::optional<fs::path> pairs_path;
  int jobs = 1;
};

/// Writes images/<stem>.png, masks/<stem>.png and transforms/<stem>.json under
/// out_dir for every image that has a mask. Returns the number of pairs.
inline std::size_t cmd_prep(const PrepOptions& opt) {
  PreprocessConfig cfg;
  if (opt.config_path)
    cfg = parse_json_text(read_text_file(*opt.config_path),
                          opt.config_path->string())
              .get<PreprocessConfig>();
  cfg.validate();

  std::map<std::string, std::string> pairs;
  if (opt.pairs_path) {
    const auto j = parse_json_text(read_text_file(*opt.pairs_path),
                                   opt.pairs_path->string());
    if (!j.is_object()) fail(Errc::parse, "pairing manifest must be an object");
    for (const auto& [k, v] : j.items()) pairs[k] = v.get<std::string>();
  }

  const auto images = list_pngs(opt.in_dir);
  if (images.empty())
    fail(Errc::validation, "no PNG images in '" + opt.in_dir.string() + "'");

  std::vector<std::pair<fs::path, fs::path>> jobs;
  for (const auto& img : images) {
    const std::string name = img.filename().string();
    fs::path mask = opt.mask_dir / name;
    if (opt.pairs_path) {
      auto it = pairs.find(name);
      if (it == pairs.end()) {
        warn("no pairing entry for '" + name + "', skipped");
        continue;
      }
      mask = opt.mask_dir / it->second;
    }
    if (!fs::exists(mask)) {
      warn("no mask for '" + name + "', skipped");
      continue;
    }
    jobs.emplace_back(img, mask);
  }

  ensure_dir(opt.out_dir / "images");
  ensure_dir(opt.out_dir / "masks");
  ensure_dir(opt.out_dir / "transforms");
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t i) {
    const auto& [img_path, mask_path] = jobs[i];
    const Raster img = read_png(img_path);
    const BinaryMask mask = read_mask_png(mask_path);
    const auto result = preprocess_pair(img, mask, cfg);
    const std::string stem = img_path.stem().string();
    write_png(opt.out_dir / "images" / (stem + ".png"), result.image);
    write_mask_png(opt.out_dir / "masks" / (stem + ".png"), result.mask);
    write_text_file(opt.out_dir / "transforms" / (stem + ".json"),
                    nlohmann::json(result.transform).dump(2) + "\n");
  });
  return jobs.size();
}

// ---------------------------------------------------------------------------
// build

struct BuildInput {
  fs::path prep_dir;
  LesionClass class_id;
};

struct BuildOptions {
  std::vector<BuildInput> inputs;
  std::uint64_t seed = 0;
  SplitCounts counts;
  fs::path out_manifest;
  Connectivity connectivity = Connectivity::eight;
  int jobs = 1;
};

/// Relative path from the manifest's directory, with forward slashes.
inline std::string manifest_relative(const fs::path& file, const fs::path& manifest) {
  const fs::path base = fs::weakly_canonical(fs::absolute(manifest)).parent_path();
  return fs::weakly_canonical(fs::absolute(file)).lexically_relative(base).generic_string();
}

inline DatasetManifest cmd_build(const BuildOptions& opt) {
  if (opt.inputs.empty()) fail(Errc::validation, "no prep directories given");
  struct Item {
    fs::path image;
    fs::path mask;
    LesionClass cls;
  };
  std::vector<Item> items;
  std::vector<std::string> ids;
  std::map<std::string, fs::path> seen;
  for (const auto& in : opt.inputs) {
    for (const auto& img : list_pngs(in.prep_dir / "images")) {
      const std::string id = img.stem().string();
      if (!seen.emplace(id, img).second)
        fail(Errc::validation, "image_id '" + id + "' appears in more than one input");
      items.push_back({img, in.prep_dir / "masks" / img.filename(), in.class_id});
      ids.push_back(id);
    }
  }
  const auto splits = shuffle_split(ids, opt.seed, opt.counts);

  DatasetManifest m;
  m.images.resize(items.size());
  std::vector<std::vector<InstanceAnnotation>> anns(items.size());
  parallel_for(items.size(), opt.jobs, [&](std::size_t i) {
    const Raster img = read_png(items[i].image);
    if (!fs::exists(items[i].mask))
      fail(Errc::io, "missing mask '" + items[i].mask.string() + "'");
    const BinaryMask mask = read_mask_png(items[i].mask);
    if (mask.width() != img.width() || mask.height() != img.height())
      fail(Errc::validation, "mask size differs from image '" + ids[i] + "'");
    ImageEntry& e = m.images[i];
    e.image_id = ids[i];
    e.file_name = manifest_relative(items[i].image, opt.out_manifest);
    e.width = img.width();
    e.height = img.height();
    e.source_class_hint = items[i].cls;
    e.split = splits[i];
    anns[i] = build_annotations(mask, items[i].cls, ids[i], opt.connectivity);
  });
  for (auto& a : anns)
    m.annotations.insert(m.annotations.end(), std::make_move_iterator(a.begin()),
                         std::make_move_iterator(a.end()));
  if (!opt.out_manifest.parent_path().empty()) ensure_dir(opt.out_manifest.parent_path());
  write_manifest(m, opt.out_manifest);
  return m;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  fs::path manifest;
  fs::path predictions;
  std::optional<fs::path> config_path;
  std::optional<std::vector<double>> thresholds;
  std::optional<IouMode> iou_mode;
  std::optional<double> min_score;
  bool no_type_filter = false;
  fs::path out_report;  // JSON; the CSV goes next to it with a .csv extension
};

struct EvalOutputs {
  EvalReport all;
  std::vector<std::pair<std::string, EvalReport>> rows;  // splits, then "all"
};

inline EvalOutputs cmd_eval(const EvalOptions& opt) {
  EvalConfig cfg;
  if (opt.config_path)
    cfg = parse_json_text(read_text_file(*opt.config_path),
                          opt.config_path->string())
              .get<EvalConfig>();
  if (opt.thresholds) cfg.thresholds = *opt.thresholds;
  if (opt.iou_mode) cfg.iou_mode = *opt.iou_mode;
  if (opt.min_score) cfg.min_score = *opt.min_score;
  if (opt.no_type_filter) cfg.apply_type_filter = false;
  cfg.validate();

  const DatasetManifest manifest = read_manifest(opt.manifest);
  const auto preds = read_predictions(opt.predictions);

  EvalOutputs out;
  out.all = evaluate_dataset(manifest, preds, cfg);
  nlohmann::json splits = nlohmann::json::object();
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (std::none_of(manifest.images.begin(), manifest.images.end(),
                     [&](const ImageEntry& e) { return e.split == s; }))
      continue;
    auto rep = evaluate_dataset(manifest, preds, cfg, s);
    splits[split_name(s)] = report_to_json(rep);
    out.rows.emplace_back(split_name(s), std::move(rep));
  }
  out.rows.emplace_back("all", out.all);

  nlohmann::json doc{{"config", cfg}, {"all", report_to_json(out.all)}, {"splits", splits}};
  if (!opt.out_report.parent_path().empty()) ensure_dir(opt.out_report.parent_path());
  write_text_file(opt.out_report, doc.dump(2) + "\n");
  fs::path csv = opt.out_report;
  csv.replace_extension(".csv");
  write_text_file(csv, reports_to_csv(out.rows));
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::uint64_t seed = 0;
  int n_images = 0;
  SyntheticParams params;
  fs::path out_dir;
  int jobs = 1;
};

/// Even-indexed images are annotated for exudates, odd ones for
/// microaneurysms, mirroring two single-lesion source datasets. Images land
/// in <out>/<class>/images and the annotated class mask in <out>/<class>/masks.
inline void cmd_synth(const SynthOptions& opt) {
  require(opt.n_images >= 0, "n_images must be >= 0");
  ensure_dir(opt.out_dir);
  if (opt.n_images == 0) return;
  for (LesionClass c : kLesionClasses) {
    ensure_dir(opt.out_dir / lesion_class_name(c) / "images");
    ensure_dir(opt.out_dir / lesion_class_name(c) / "masks");
  }
  parallel_for(static_cast<std::size_t>(opt.n_images), opt.jobs, [&](std::size_t i) {
    const std::uint64_t image_seed = SplitMix64::for_item(opt.seed, i).next();
    const auto f = generate_synthetic_fundus(image_seed, opt.params);
    const LesionClass c = i % 2 == 0 ? LesionClass::exudate : LesionClass::microaneurysm;
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04zu.png", i);
    const fs::path dir = opt.out_dir / lesion_class_name(c);
    write_png(dir / "images" / name, f.image);
    write_mask_png(dir / "masks" / name, f.mask_for(c));
  });
}

inline void cmd_emit_config(const fs::path& out_path) {
  if (!out_path.parent_path().empty()) ensure_dir(out_path.parent_path());
  write_config(default_model_config(), out_path);
}

/// Runs `body`, maps failures onto exit codes and prints a single-line error
/// to `err`.
inline int run_guarded(const std::function<void()>& body, std::ostream& err = std::cerr) {
  auto one_line = [](std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  try {
    body();
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << one_line(e.what()) << '\n';
    return exit_status_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << '\n';
    return kIoFailure;
  } catch (const nlohmann::json::exception& e) {
    err << "error: parse: " << one_line(e.what()) << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return kInternalError;
  }
}

}  // namespace fundus::cli
