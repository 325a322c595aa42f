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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "leafscan/common.hpp"
#include "leafscan/geometry.hpp"

namespace leafscan {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  [[nodiscard]] std::int64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> map_50;
  /// Set when precision, recall or f1 had a zero denominator and was reported as 0.
  bool degenerate = false;
};

/// 2PR / (P + R), or 0 when P + R = 0.
double f1_score(double precision, double recall);

/// Throws ContractError for negative or all-zero counts.
MetricsReport classification_metrics(const ConfusionCounts& counts);

/// Positive class is `diseased`. Throws ContractError on a length mismatch.
ConfusionCounts confusion_counts(std::span<const Label> truth, std::span<const Label> predicted);

/// No mask, a registered mini-mask, or a full-frame mask.
using InstanceMask = std::variant<std::monostate, MiniMask, BinaryMask>;

/// Expands any mask representation to a full-frame mask of `dims`; a missing
/// mask expands to an empty one.
BinaryMask to_full_mask(const InstanceMask& mask, ImageDims dims);

struct Detection {
  Label label = Label::kDiseased;
  double score = 0.0;
  BBox bbox;
  InstanceMask mask;

  /// score in [0, 1] and a valid bbox.
  [[nodiscard]] bool satisfies_invariants() const;
};

struct GroundTruth {
  Label label = Label::kDiseased;
  BBox bbox;
  InstanceMask mask;
};

inline constexpr double kDefaultScoreThreshold = 0.5;
inline constexpr double kDefaultIouThreshold = 0.5;

/// Diseased iff some diseased detection scores at least `score_threshold`.
Label image_level_verdict(std::span<const Detection> detections,
                          double score_threshold = kDefaultScoreThreshold);

enum class IouKind : std::uint8_t { kBox, kMask };

struct MatchPair {
  std::size_t detection = 0;
  std::size_t truth = 0;
  double iou = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // in processing order
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_truths;
  /// Mask mode only: truths with an empty mask take no part in matching.
  std::vector<std::size_t> skipped_truths;
};

/// Greedy matching. Detections are visited by descending score (ties by
/// ascending index); each claims the unclaimed same-label truth with the
/// highest IoU >= `iou_threshold` (ties by ascending truth index).
/// Mask mode needs `dims` to expand masks.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> truths, double iou_threshold,
                             IouKind kind = IouKind::kBox, ImageDims dims = {});

/// A detection ranked for AP: its score and whether it matched a truth.
struct RankedDetection {
  double score = 0.0;
  bool true_positive = false;
};

/// Area under the enveloped precision/recall staircase. `ranked` must already
/// be in descending-score order. Returns nullopt when `num_truths` is 0.
std::optional<double> average_precision_ranked(std::span<const RankedDetection> ranked,
                                               std::size_t num_truths);

struct ImageEvaluation {
  std::vector<Detection> detections;
  std::vector<GroundTruth> truths;
  ImageDims dims;
};

/// Dataset-level AP for one class. Detections are ranked globally by score,
/// ties by (image index, detection index).
std::optional<double> average_precision(std::span<const ImageEvaluation> images, Label label,
                                        double iou_threshold = kDefaultIouThreshold,
                                        IouKind kind = IouKind::kBox);

/// Mean of per-class AP over classes that have at least one ground truth.
std::optional<double> mean_average_precision(std::span<const ImageEvaluation> images,
                                             double iou_threshold = kDefaultIouThreshold,
                                             IouKind kind = IouKind::kBox);

/// |union of diseased masks| / (width * height).
double damage_extent(std::span<const Detection> detections, ImageDims dims);

}  // namespace leafscan
