// Copyright 2026 The LeafScan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leafscan/annotation.hpp"
#include "leafscan/metrics.hpp"

namespace leafscan {

/// Image-level output of a classifier run.
struct Classification {
  Label label = Label::kHealthy;
  double probability = 0.0;
};

struct ImagePrediction {
  std::string image_id;
  std::vector<Detection> detections;
  std::optional<Classification> classification;
};

struct PredictionSet {
  std::string model_run_id;
  std::vector<ImagePrediction> images;
};

/// {label, score, bbox: [x_min, y_min, x_max, y_max], mask?: RLE over `dims`}
nlohmann::json detection_to_json(const Detection& detection, ImageDims dims);
/// Masks come back as full-frame BinaryMask.
Detection detection_from_json(const nlohmann::json& doc);

nlohmann::json predictions_to_json(const PredictionSet& predictions,
                                   const DatasetManifest& manifest);
PredictionSet predictions_from_json(const nlohmann::json& doc);
PredictionSet load_predictions(const std::filesystem::path& path);

struct EvaluationOptions {
  double score_threshold = kDefaultScoreThreshold;
  double iou_threshold = kDefaultIouThreshold;
};

struct PerImageResult {
  std::string image_id;
  Label verdict = Label::kHealthy;
  Label truth_label = Label::kHealthy;
  double extent = 0.0;
};

struct EvaluationReport {
  ConfusionCounts counts;
  MetricsReport metrics;  // map_50 is the box-based value
  std::optional<double> map_50_mask;
  std::vector<PerImageResult> per_image;
};

/// Scores the test split (every record when nothing is assigned to test).
/// The verdict comes from the classifier output when an image carries one,
/// otherwise from image_level_verdict over its detections. Throws
/// ContractError when an evaluated image has no prediction.
EvaluationReport evaluate(const DatasetManifest& manifest, const PredictionSet& predictions,
                          const EvaluationOptions& options = {});

nlohmann::json report_to_json(const EvaluationReport& report);

/// Ground-truth regions of one record, masks rasterized when `with_masks`.
std::vector<GroundTruth> ground_truths(const DatasetManifest& manifest, const ImageRecord& record,
                                       bool with_masks);

}  // namespace leafscan
