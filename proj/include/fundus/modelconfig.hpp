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
#include <filesystem>
#include <string>
#include <vector>

#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "json.hpp"

namespace fundus {

struct LrStage {
  double lr = 0.0;
  int epochs = 0;

  bool operator==(const LrStage&) const = default;
};

/// Detector training hyperparameters handed to an external trainer.
/// detection_min_confidence is a fraction in (0, 1).
struct ModelTrainConfig {
  int rpn_anchor_min = 0;  // smallest RPN anchor side, pixels
  int rpn_train_anchors_per_image = 0;
  int train_rois_per_image = 0;
  int detection_max_instances = 0;
  double detection_min_confidence = 0.0;
  int num_classes = 0;  // background + exudate + microaneurysm
  bool use_mini_mask = true;
  std::string optimizer;
  std::vector<LrStage> lr_schedule;
  int total_epochs = 0;
  int input_side = 0;

  int schedule_epochs() const {
    int n = 0;
    for (const auto& s : lr_schedule) n += s.epochs;
    return n;
  }

  void validate() const {
    auto check = [](bool ok, const std::string& what) {
      if (!ok) fail(Errc::validation, what);
    };
    check(num_classes == 3,
          "num_classes must be 3 (background, exudate, microaneurysm), got " +
              std::to_string(num_classes));
    check(detection_min_confidence > 0.0 && detection_min_confidence < 1.0,
          "detection_min_confidence must lie in (0, 1)");
    check(rpn_anchor_min >= 1, "rpn_anchor_min must be >= 1");
    check(rpn_train_anchors_per_image >= 1,
          "rpn_train_anchors_per_image must be >= 1");
    check(train_rois_per_image >= 1, "train_rois_per_image must be >= 1");
    check(detection_max_instances >= 1, "detection_max_instances must be >= 1");
    check(!optimizer.empty(), "optimizer must be named");
    check(!lr_schedule.empty(), "lr_schedule must not be empty");
    for (const auto& s : lr_schedule)
      check(s.lr > 0.0 && s.epochs >= 1,
            "lr_schedule stages need lr > 0 and epochs >= 1");
    check(schedule_epochs() == total_epochs,
          "lr_schedule epochs sum to " + std::to_string(schedule_epochs()) +
              " but total_epochs is " + std::to_string(total_epochs));
    check(input_side >= 1, "input_side must be >= 1");
  }

  bool operator==(const ModelTrainConfig&) const = default;
};

inline ModelTrainConfig default_model_config() {
  ModelTrainConfig c;
  c.rpn_anchor_min = 8;
  c.rpn_train_anchors_per_image = 512;
  c.train_rois_per_image = 512;
  c.detection_max_instances = 256;
  c.detection_min_confidence = 0.35;
  c.num_classes = 3;
  c.use_mini_mask = false;
  c.optimizer = "adam";
  c.lr_schedule = {{1e-4, 25}, {1e-5, 25}, {1e-6, 15}};
  c.total_epochs = 65;
  c.input_side = 1024;
  return c;
}

inline void to_json(nlohmann::json& j, const ModelTrainConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.lr_schedule)
    stages.push_back({{"lr", s.lr}, {"epochs", s.epochs}});
  j = nlohmann::json{
      {"rpn_anchor_min", c.rpn_anchor_min},
      {"rpn_train_anchors_per_image", c.rpn_train_anchors_per_image},
      {"train_rois_per_image", c.train_rois_per_image},
      {"detection_max_instances", c.detection_max_instances},
      {"detection_min_confidence", c.detection_min_confidence},
      {"num_classes", c.num_classes},
      {"use_mini_mask", c.use_mini_mask},
      {"optimizer", c.optimizer},
      {"lr_schedule", stages},
      {"total_epochs", c.total_epochs},
      {"input_side", c.input_side}};
}

inline void from_json(const nlohmann::json& j, ModelTrainConfig& c) {
  c.rpn_anchor_min = j.at("rpn_anchor_min").get<int>();
  c.rpn_train_anchors_per_image = j.at("rpn_train_anchors_per_image").get<int>();
  c.train_rois_per_image = j.at("train_rois_per_image").get<int>();
  c.detection_max_instances = j.at("detection_max_instances").get<int>();
  c.detection_min_confidence = j.at("detection_min_confidence").get<double>();
  c.num_classes = j.at("num_classes").get<int>();
  c.use_mini_mask = j.at("use_mini_mask").get<bool>();
  c.optimizer = j.at("optimizer").get<std::string>();
  c.lr_schedule.clear();
  for (const auto& s : j.at("lr_schedule"))
    c.lr_schedule.push_back({s.at("lr").get<double>(), s.at("epochs").get<int>()});
  c.total_epochs = j.at("total_epochs").get<int>();
  c.input_side = j.at("input_side").get<int>();
}

inline ModelTrainConfig config_from_json(const nlohmann::json& j) {
  ModelTrainConfig c;
  try {
    c = j.get<ModelTrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

inline void write_config(const ModelTrainConfig& c,
                         const std::filesystem::path& path) {
  c.validate();
  write_text_file(path, nlohmann::json(c).dump(2) + "\n");
}

inline ModelTrainConfig read_config(const std::filesystem::path& path) {
  return config_from_json(parse_json_text(read_text_file(path), path.string()));
}

}  // namespace fundus
