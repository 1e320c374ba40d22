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

// fundusctl: batch front end for preprocessing, annotation building,
// evaluation, synthetic fixtures and training-config emission.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fundus/cli.hpp"

namespace {

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fundus::fail(fundus::Errc::validation, "bad threshold '" + item + "'");
    }
  }
  return out;
}

fundus::SplitCounts parse_counts(const std::vector<std::size_t>& v) {
  if (v.size() != 3)
    fundus::fail(fundus::Errc::validation, "--counts needs train,val,test");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = fundus::cli;
  CLI::App app{"Fundus lesion dataset preprocessing and evaluation toolkit"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs,-j", jobs, "Worker threads for per-image work")
      ->check(CLI::PositiveNumber);

  // prep
  cli::PrepOptions prep;
  std::string prep_config, prep_pairs;
  auto* prep_cmd = app.add_subcommand("prep", "Normalize image/mask pairs");
  prep_cmd->add_option("--in", prep.in_dir, "Directory of fundus PNGs")->required();
  prep_cmd->add_option("--masks", prep.mask_dir, "Directory of lesion mask PNGs")->required();
  prep_cmd->add_option("--out", prep.out_dir, "Output directory")->required();
  prep_cmd->add_option("--config", prep_config, "PreprocessConfig JSON");
  prep_cmd->add_option("--pairs", prep_pairs, "JSON object image file -> mask file");

  // build
  std::vector<std::string> build_dirs;
  std::vector<int> build_classes;
  std::vector<std::size_t> build_counts;
  std::uint64_t seed = 0;
  int connectivity = 8;
  std::string build_out;
  auto* build_cmd = app.add_subcommand("build", "Extract instances, split, write manifest");
  build_cmd->add_option("--prep-dir", build_dirs, "prep output directory (repeatable)")
      ->required();
  build_cmd->add_option("--class-id", build_classes,
                        "Lesion class of each --prep-dir: 1 exudate, 2 microaneurysm")
      ->required();
  build_cmd->add_option("--seed", seed, "Shuffle seed");
  build_cmd->add_option("--counts", build_counts, "train,val,test image counts")
      ->delimiter(',')
      ->required();
  build_cmd->add_option("--connectivity", connectivity, "4 or 8")->check(CLI::IsMember({4, 8}));
  build_cmd->add_option("--out", build_out, "Manifest path")->required();

  // eval
  cli::EvalOptions ev;
  std::string eval_config, thresholds, iou_mode;
  double min_score = 0.0;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a manifest");
  eval_cmd->add_option("--manifest", ev.manifest)->required();
  eval_cmd->add_option("--predictions", ev.predictions)->required();
  eval_cmd->add_option("--config", eval_config, "EvalConfig JSON");
  eval_cmd->add_option("--thresholds", thresholds, "Comma separated IoU cutoffs");
  eval_cmd->add_option("--iou-mode", iou_mode, "mask or bbox")
      ->check(CLI::IsMember({"mask", "bbox"}));
  eval_cmd->add_option("--min-score", min_score, "Drop predictions below this score");
  eval_cmd->add_flag("--no-type-filter", ev.no_type_filter,
                     "Keep predictions of every class on every image");
  eval_cmd->add_option("--out", ev.out_report, "Report JSON path (CSV written alongside)")
      ->required();

  // synth
  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic fundus fixtures");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--n-images", synth.n_images)->required();
  synth_cmd->add_option("--side", synth.params.side, "Canvas height in pixels (>= 64)");
  synth_cmd->add_option("--n-exudates", synth.params.n_exudates);
  synth_cmd->add_option("--n-mas", synth.params.n_mas);
  synth_cmd->add_option("--out", synth.out_dir)->required();

  // emit-config
  std::string config_out;
  auto* emit_cmd = app.add_subcommand("emit-config", "Write the detector training config");
  emit_cmd->add_option("--out", config_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return cli::kValidationFailure;
  }

  return cli::run_guarded([&] {
    if (*prep_cmd) {
      prep.jobs = jobs;
      if (!prep_config.empty()) prep.config_path = prep_config;
      if (!prep_pairs.empty()) prep.pairs_path = prep_pairs;
      const auto n = cli::cmd_prep(prep);
      std::cerr << "prep: " << n << " pairs written\n";
    } else if (*build_cmd) {
      if (build_dirs.size() != build_classes.size())
        fundus::fail(fundus::Errc::validation,
                     "--prep-dir and --class-id must be given the same number of times");
      cli::BuildOptions b;
      for (std::size_t i = 0; i < build_dirs.size(); ++i)
        b.inputs.push_back({build_dirs[i], fundus::lesion_class_from_int(build_classes[i])});
      b.seed = seed;
      b.counts = parse_counts(build_counts);
      b.out_manifest = build_out;
      b.connectivity = fundus::connectivity_from_int(connectivity);
      b.jobs = jobs;
      const auto m = cli::cmd_build(b);
      std::cerr << "build: " << m.images.size() << " images, " << m.annotations.size()
                << " instances\n";
    } else if (*eval_cmd) {
      if (!eval_config.empty()) ev.config_path = eval_config;
      if (!thresholds.empty()) ev.thresholds = parse_thresholds(thresholds);
      if (!iou_mode.empty()) ev.iou_mode = fundus::iou_mode_from_string(iou_mode);
      if (eval_cmd->count("--min-score") > 0) ev.min_score = min_score;
      const auto out = cli::cmd_eval(ev);
      for (std::size_t t = 0; t < out.all.thresholds.size(); ++t)
        std::cout << fundus::map_column_name(out.all.thresholds[t]) << ' '
                  << nlohmann::json(out.all.map[t]).dump() << '\n';
    } else if (*synth_cmd) {
      synth.jobs = jobs;
      cli::cmd_synth(synth);
    } else if (*emit_cmd) {
      cli::cmd_emit_config(config_out);
    }
  });
}
