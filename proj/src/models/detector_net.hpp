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

#include <torch/torch.h>

#include "leafscan/models.hpp"

namespace leafscan::detail {

/// ResNet bottleneck: 1x1 reduce, 3x3 (strided), 1x1 expand, identity or
/// projection shortcut.
struct BottleneckImpl : torch::nn::Module {
  BottleneckImpl(int in, int planes, int stride);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(Bottleneck);

/// Single feature map. resnet101: stem + stages 1-3 (stride 16, 1024 ch)
/// reduced to 256 ch by a 1x1 conv. lite: four conv-BN-ReLU layers (stride 8,
/// 64 ch).
struct BackboneImpl : torch::nn::Module {
  explicit BackboneImpl(BackboneKind kind);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential body{nullptr};
  int out_channels = 0;
  double stride = 0.0;
};
TORCH_MODULE(Backbone);

/// Bilinear RoI pooling: samples a (2*out)^2 grid over each box and averages
/// 2x2 groups. `rois` are [K, 4] in input pixels; `fmap` is [1, C, H, W] at
/// `stride` input pixels per cell.
torch::Tensor roi_align(const torch::Tensor& fmap, const torch::Tensor& rois, int out,
                        double stride);

struct DetectorNetImpl : torch::nn::Module {
  explicit DetectorNetImpl(const DetectorConfig& config);

  struct Stage1 {
    torch::Tensor fmap;        // [N, C, H, W]
    torch::Tensor rpn_logits;  // [N, H*W*A]
    torch::Tensor rpn_deltas;  // [N, H*W*A, 4]
    torch::Tensor anchors;     // [H*W*A, 4]
  };
  Stage1 stage1(const torch::Tensor& images);

  /// Decoded, clipped, NMS-filtered proposals for image `i`; no gradient.
  torch::Tensor proposals(const Stage1& s, std::int64_t i, int post_nms);

  /// Class logits [K, 3] and class-specific deltas [K, 3, 4].
  std::pair<torch::Tensor, torch::Tensor> box_head(const torch::Tensor& fmap,
                                                   const torch::Tensor& rois);
  /// Per-class mask logits [K, 3, M, M].
  torch::Tensor mask_head(const torch::Tensor& fmap, const torch::Tensor& rois);

  DetectorConfig config;
  Backbone backbone{nullptr};
  torch::nn::Conv2d rpn_conv{nullptr}, rpn_cls{nullptr}, rpn_bbox{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, cls_score{nullptr}, bbox_pred{nullptr};
  torch::nn::Sequential mask_convs{nullptr};
  torch::nn::ConvTranspose2d mask_up{nullptr};
  torch::nn::Conv2d mask_logits{nullptr};
  int anchors_per_cell = 0;
  static constexpr int kBoxPool = 7;
  static constexpr int kClasses = 3;  // background, healthy, diseased
};
TORCH_MODULE(DetectorNet);

inline std::int64_t class_index(Label label) { return label == Label::kHealthy ? 1 : 2; }
inline Label class_label(std::int64_t index) {
  return index == 1 ? Label::kHealthy : Label::kDiseased;
}

}  // namespace leafscan::detail
