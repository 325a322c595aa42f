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

#include <vector>

#include <torch/torch.h>

namespace leafscan::detail {

/// Boxes are [N, 4] float tensors (x1, y1, x2, y2) in input pixels.

/// Anchors ordered (row, col, anchor) to match a [N, A, H, W] head output
/// permuted to [N, H, W, A]. Ratios are height / width.
torch::Tensor generate_anchors(int feat_h, int feat_w, double stride,
                               const std::vector<double>& sizes,
                               const std::vector<double>& ratios);

torch::Tensor iou_matrix(const torch::Tensor& a, const torch::Tensor& b);

/// Regression targets divided by kBoxStd.
torch::Tensor encode_boxes(const torch::Tensor& reference, const torch::Tensor& target);
torch::Tensor decode_boxes(const torch::Tensor& reference, const torch::Tensor& deltas);

inline constexpr float kBoxStd[4] = {0.1F, 0.1F, 0.2F, 0.2F};

torch::Tensor clip_boxes(const torch::Tensor& boxes, float x1, float y1, float x2, float y2);

/// Greedy non-maximum suppression. Returns kept indices (int64) in descending
/// score order; equal scores keep the lower index first.
torch::Tensor nms(const torch::Tensor& boxes, const torch::Tensor& scores, double iou_threshold,
                  std::int64_t max_keep);

}  // namespace leafscan::detail
