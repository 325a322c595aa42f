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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "leafscan/annotation.hpp"
#include "leafscan/evaluation.hpp"
#include "leafscan/geometry.hpp"
#include "leafscan/metrics.hpp"

namespace leafscan {

enum class OptimizerKind : std::uint8_t { kAdam, kSgdMomentum };
enum class BackboneKind : std::uint8_t { kResnet101, kLite };

/// Image-level CNN: `conv_blocks` x (conv3x3 -> batch norm -> ReLU -> 2x2 max
/// pool), channels doubling from `base_channels`, then flatten -> one fully
/// connected unit -> sigmoid.
struct ClassifierConfig {
  int conv_blocks = 3;
  int base_channels = 16;
  ImageDims input_size{256, 256};
  int epochs = 30;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  /// 0 means full-batch updates.
  int batch_size = 32;
  bool deterministic = true;
  std::optional<CropRect> crop;

  /// Throws ConfigError.
  void validate() const;
};

/// Two-stage instance segmentation detector: backbone -> region proposals ->
/// per-region class, box refinement and mask. Two foreground classes
/// (healthy, diseased) plus background.
struct DetectorConfig {
  BackboneKind backbone = BackboneKind::kResnet101;
  int num_classes = 2;
  ImageDims input_size{1024, 1024};
  int mini_mask_side = kDefaultMiniMaskSide;
  int mask_shape = 28;
  int epochs = 60;
  int batch_size = 2;
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip_norm = 5.0;

  /// Anchor side lengths in input pixels and aspect ratios (h / w).
  std::vector<double> anchor_sizes{32, 64, 128, 256, 512};
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  int rpn_anchors_per_image = 256;
  double rpn_positive_iou = 0.7;
  double rpn_negative_iou = 0.3;
  double rpn_nms_iou = 0.7;
  int pre_nms_proposals = 2000;
  int post_nms_proposals_train = 1000;
  int post_nms_proposals_inference = 500;
  int rois_per_image = 200;
  double roi_positive_fraction = 0.33;
  double roi_positive_iou = 0.5;
  int max_detections = 100;
  double detection_nms_iou = 0.3;
  double mask_threshold = 0.5;

  bool horizontal_flip = false;
  bool deterministic = true;
  /// Keep only the newest N epoch checkpoints; 0 keeps every epoch.
  int keep_checkpoints = 0;
  /// "random", or a detector checkpoint path to warm-start from.
  std::string init = "random";
  std::optional<CropRect> crop;

  /// Throws ConfigError.
  void validate() const;

  /// Desk-scale variant: 256x256 input and the light backbone.
  static DetectorConfig smoke();
};

nlohmann::json to_json(const ClassifierConfig& config);
nlohmann::json to_json(const DetectorConfig& config);
/// Unknown keys are rejected with ConfigError.
ClassifierConfig classifier_config_from_json(const nlohmann::json& doc);
DetectorConfig detector_config_from_json(const nlohmann::json& doc);

struct EpochLoss {
  int epoch = 0;
  double total = 0.0;
  /// Detector runs only: classification, box and mask terms (RPN terms folded
  /// into the first two).
  std::optional<double> classification;
  std::optional<double> box;
  std::optional<double> mask;
};

struct TrainingRun {
  std::string run_id;
  std::string kind;  // "classifier" or "detector"
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<EpochLoss> loss_trace;
  std::vector<std::filesystem::path> checkpoints;
  std::string split_fingerprint;
  std::filesystem::path run_dir;
  /// Images the run trained on, after filtering.
  std::size_t train_images = 0;
};

struct TrainOptions {
  std::filesystem::path dataset_root;
  std::filesystem::path runs_dir = "runs";
  std::uint64_t seed = 0;
  /// Derived from kind, seed, config and split when empty.
  std::string run_id;
  std::function<void(const EpochLoss&)> on_epoch;
};

/// Trains on records in the train split (every record when nothing is
/// assigned). Throws ConfigError for a single-class training set.
TrainingRun train_classifier(const DatasetManifest& manifest, const ClassifierConfig& config,
                             const TrainOptions& options);

/// Trains on train-split records carrying at least one annotation. Throws
/// ConfigError when no such record exists.
TrainingRun train_detector(const DatasetManifest& manifest, const DetectorConfig& config,
                           const TrainOptions& options);

/// Diseased iff probability >= 0.5.
Label label_from_probability(double probability);

class Classifier {
 public:
  /// Throws LoadError for a missing, corrupt or foreign checkpoint.
  static Classifier load(const std::filesystem::path& checkpoint);

  /// Applies the configured crop and letterbox, then classifies.
  [[nodiscard]] Classification classify(const cv::Mat& image) const;
  /// `image` must already be BGR at the configured input size; throws
  /// ContractError otherwise.
  [[nodiscard]] Classification classify_preprocessed(const cv::Mat& image) const;

  [[nodiscard]] const ClassifierConfig& config() const;
  [[nodiscard]] const std::string& run_id() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

class Detector {
 public:
  /// Throws LoadError for a missing, corrupt or foreign checkpoint.
  static Detector load(const std::filesystem::path& checkpoint);

  /// Detections with score >= score_floor, boxes in original image
  /// coordinates, masks registered to their boxes, sorted by descending score.
  /// Safe to call concurrently.
  [[nodiscard]] std::vector<Detection> detect(const cv::Mat& image, double score_floor) const;

  [[nodiscard]] const DetectorConfig& config() const;
  [[nodiscard]] const std::string& run_id() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// "classifier" or "detector"; throws LoadError when unreadable.
std::string checkpoint_kind(const std::filesystem::path& checkpoint);

/// Highest-numbered checkpoints/epoch_<n>.pt under a run directory; throws
/// LoadError when there is none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// Loads the image a record points at, honoring EXIF orientation.
cv::Mat load_record_image(const std::filesystem::path& root, const ImageRecord& record);

}  // namespace leafscan
