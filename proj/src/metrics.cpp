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

#include "leafscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "leafscan/error.hpp"

namespace leafscan {

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

MetricsReport classification_metrics(const ConfusionCounts& counts) {
  if (counts.tp < 0 || counts.fp < 0 || counts.fn < 0 || counts.tn < 0) {
    throw ContractError("confusion counts must be non-negative");
  }
  if (counts.total() == 0) {
    throw ContractError("classification_metrics requires at least one evaluated item");
  }
  MetricsReport report;
  const auto ratio = [&report](std::int64_t num, std::int64_t den) {
    if (den == 0) {
      report.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  report.accuracy = ratio(counts.tp + counts.tn, counts.total());
  report.precision = ratio(counts.tp, counts.tp + counts.fp);
  report.recall = ratio(counts.tp, counts.tp + counts.fn);
  if (report.precision + report.recall == 0.0) report.degenerate = true;
  report.f1 = f1_score(report.precision, report.recall);
  return report;
}

ConfusionCounts confusion_counts(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw ContractError("confusion_counts: truth and prediction lengths differ");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == Label::kDiseased;
    const bool p = predicted[i] == Label::kDiseased;
    if (t && p) {
      ++c.tp;
    } else if (!t && p) {
      ++c.fp;
    } else if (t && !p) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

BinaryMask to_full_mask(const InstanceMask& mask, ImageDims dims) {
  if (const auto* mini = std::get_if<MiniMask>(&mask)) {
    return decode_mini_mask(*mini, dims);
  }
  if (const auto* full = std::get_if<BinaryMask>(&mask)) {
    if (full->dims() != dims) {
      throw ContractError("detection mask dimensions do not match the image");
    }
    return *full;
  }
  return BinaryMask(dims);
}

bool Detection::satisfies_invariants() const {
  return score >= 0.0 && score <= 1.0 && bbox.valid();
}

Label image_level_verdict(std::span<const Detection> detections, double score_threshold) {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ContractError("score threshold must lie in [0, 1]");
  }
  const bool diseased = std::any_of(detections.begin(), detections.end(), [&](const Detection& d) {
    return d.label == Label::kDiseased && d.score >= score_threshold;
  });
  return diseased ? Label::kDiseased : Label::kHealthy;
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> truths, double iou_threshold,
                             IouKind kind, ImageDims dims) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ContractError("IoU threshold must lie in (0, 1]");
  }
  if (kind == IouKind::kMask && !dims.valid()) {
    throw ContractError("mask matching requires image dimensions");
  }

  std::vector<BinaryMask> truth_masks;
  std::vector<BinaryMask> det_masks;
  std::vector<bool> claimed(truths.size(), false);
  MatchResult result;
  if (kind == IouKind::kMask) {
    for (std::size_t t = 0; t < truths.size(); ++t) {
      truth_masks.push_back(to_full_mask(truths[t].mask, dims));
      if (truth_masks.back().count() == 0) {
        claimed[t] = true;
        result.skipped_truths.push_back(t);
      }
    }
    for (const auto& d : detections) det_masks.push_back(to_full_mask(d.mask, dims));
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<bool> matched(detections.size(), false);
  for (std::size_t d : order) {
    double best_iou = -1.0;
    std::size_t best = truths.size();
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (claimed[t] || truths[t].label != detections[d].label) continue;
      const double iou = kind == IouKind::kBox ? box_iou(detections[d].bbox, truths[t].bbox)
                                               : mask_iou(det_masks[d], truth_masks[t]);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = t;
      }
    }
    if (best < truths.size()) {
      claimed[best] = true;
      matched[d] = true;
      result.pairs.push_back({d, best, best_iou});
    }
  }
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (!matched[d]) result.unmatched_detections.push_back(d);
  }
  for (std::size_t t = 0; t < truths.size(); ++t) {
    if (!claimed[t]) result.unmatched_truths.push_back(t);
  }
  return result;
}

std::optional<double> average_precision_ranked(std::span<const RankedDetection> ranked,
                                               std::size_t num_truths) {
  if (num_truths == 0) {
    return std::nullopt;
  }
  const std::size_t n = ranked.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += ranked[k].true_positive ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Envelope: precision at a recall level is the best precision at any
  // equal-or-higher recall.
  for (std::size_t k = n; k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (ranked[k].true_positive) ap += precision[k];
  }
  return ap / static_cast<double>(num_truths);
}

std::optional<double> average_precision(std::span<const ImageEvaluation> images, Label label,
                                        double iou_threshold, IouKind kind) {
  struct Entry {
    double score;
    std::size_t image;
    std::size_t index;
    bool tp;
  };
  std::vector<Entry> entries;
  std::size_t num_truths = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageEvaluation& img = images[i];
    const MatchResult m =
        match_detections(img.detections, img.truths, iou_threshold, kind, img.dims);
    std::vector<bool> tp(img.detections.size(), false);
    for (const auto& p : m.pairs) tp[p.detection] = true;
    std::vector<bool> skipped(img.truths.size(), false);
    for (std::size_t t : m.skipped_truths) skipped[t] = true;
    for (std::size_t t = 0; t < img.truths.size(); ++t) {
      if (!skipped[t] && img.truths[t].label == label) ++num_truths;
    }
    for (std::size_t d = 0; d < img.detections.size(); ++d) {
      if (img.detections[d].label == label) {
        entries.push_back({img.detections[d].score, i, d, tp[d]});
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(b.score, a.image, a.index) < std::tie(a.score, b.image, b.index);
  });
  std::vector<RankedDetection> ranked;
  ranked.reserve(entries.size());
  for (const auto& e : entries) ranked.push_back({e.score, e.tp});
  return average_precision_ranked(ranked, num_truths);
}

std::optional<double> mean_average_precision(std::span<const ImageEvaluation> images,
                                             double iou_threshold, IouKind kind) {
  double sum = 0.0;
  int classes = 0;
  for (Label label : {Label::kHealthy, Label::kDiseased}) {
    if (const auto ap = average_precision(images, label, iou_threshold, kind)) {
      sum += *ap;
      ++classes;
    }
  }
  if (classes == 0) {
    return std::nullopt;
  }
  return sum / classes;
}

double damage_extent(std::span<const Detection> detections, ImageDims dims) {
  if (!dims.valid()) {
    throw ContractError("damage_extent requires positive image dimensions");
  }
  BinaryMask uni(dims);
  for (const auto& d : detections) {
    if (d.label == Label::kDiseased) uni |= to_full_mask(d.mask, dims);
  }
  return static_cast<double>(uni.count()) / static_cast<double>(dims.area());
}

}  // namespace leafscan
