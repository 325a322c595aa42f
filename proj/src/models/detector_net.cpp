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

#include "detector_net.hpp"

#include "box_ops.hpp"

namespace leafscan::detail {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride = 1, int pad = 0, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

void init_kaiming(nn::Module& module) {
  for (auto& m : module.modules(false)) {
    if (auto* c = m->as<nn::Conv2dImpl>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (c->bias.defined()) nn::init::zeros_(c->bias);
    }
  }
}

void init_normal(const torch::Tensor& weight, const torch::Tensor& bias, double std) {
  torch::NoGradGuard no_grad;
  nn::init::normal_(weight, 0.0, std);
  if (bias.defined()) nn::init::zeros_(bias);
}

}  // namespace

BottleneckImpl::BottleneckImpl(int in, int planes, int stride) {
  conv1 = register_module("conv1", conv(in, planes, 1));
  bn1 = register_module("bn1", nn::BatchNorm2d(planes));
  conv2 = register_module("conv2", conv(planes, planes, 3, stride, 1));
  bn2 = register_module("bn2", nn::BatchNorm2d(planes));
  conv3 = register_module("conv3", conv(planes, planes * 4, 1));
  bn3 = register_module("bn3", nn::BatchNorm2d(planes * 4));
  if (stride != 1 || in != planes * 4) {
    shortcut = register_module(
        "shortcut", nn::Sequential(conv(in, planes * 4, 1, stride), nn::BatchNorm2d(planes * 4)));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1(conv1(x)));
  y = torch::relu(bn2(conv2(y)));
  y = bn3(conv3(y));
  return torch::relu(y + (shortcut ? shortcut->forward(x) : x));
}

BackboneImpl::BackboneImpl(BackboneKind kind) {
  body = register_module("body", nn::Sequential());
  if (kind == BackboneKind::kLite) {
    const int widths[] = {16, 32, 64, 64};
    const int strides[] = {2, 2, 2, 1};
    int in = 3;
    for (int i = 0; i < 4; ++i) {
      body->push_back(conv(in, widths[i], 3, strides[i], 1));
      body->push_back(nn::BatchNorm2d(widths[i]));
      body->push_back(nn::ReLU());
      in = widths[i];
    }
    out_channels = 64;
    stride = 8.0;
  } else {
    body->push_back(conv(3, 64, 7, 2, 3));
    body->push_back(nn::BatchNorm2d(64));
    body->push_back(nn::ReLU());
    body->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    int in = 64;
    const int blocks[] = {3, 4, 23};
    const int planes[] = {64, 128, 256};
    for (int s = 0; s < 3; ++s) {
      for (int b = 0; b < blocks[s]; ++b) {
        body->push_back(Bottleneck(in, planes[s], (b == 0 && s > 0) ? 2 : 1));
        in = planes[s] * 4;
      }
    }
    body->push_back(conv(in, 256, 1, 1, 0, true));
    body->push_back(nn::ReLU());
    out_channels = 256;
    stride = 16.0;
  }
  init_kaiming(*this);
  // Residual branches start as identity.
  for (auto& m : modules(false)) {
    if (auto* b = m->as<BottleneckImpl>()) {
      torch::NoGradGuard no_grad;
      b->bn3->weight.zero_();
    }
  }
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& x) { return body->forward(x); }

torch::Tensor roi_align(const torch::Tensor& fmap, const torch::Tensor& rois, int out,
                        double stride) {
  const auto k = rois.size(0);
  const auto c = fmap.size(1);
  if (k == 0) return torch::zeros({0, c, out, out}, fmap.options());
  const auto h = static_cast<double>(fmap.size(2));
  const auto w = static_cast<double>(fmap.size(3));
  const int s = 2 * out;
  const auto t = (torch::arange(s, torch::kFloat32) + 0.5F) / static_cast<float>(s);
  const auto x1 = rois.select(1, 0).unsqueeze(1);
  const auto y1 = rois.select(1, 1).unsqueeze(1);
  const auto xs = x1 + t.unsqueeze(0) * (rois.select(1, 2).unsqueeze(1) - x1);
  const auto ys = y1 + t.unsqueeze(0) * (rois.select(1, 3).unsqueeze(1) - y1);
  const auto gx = (xs / stride) * (2.0 / w) - 1.0;
  const auto gy = (ys / stride) * (2.0 / h) - 1.0;
  const auto grid = torch::stack({gx.unsqueeze(1).expand({k, s, s}), gy.unsqueeze(2).expand({k, s, s})},
                                 3)
                        .reshape({1, k * s, s, 2})
                        .to(fmap.dtype());
  const auto sampled = torch::grid_sampler(fmap, grid, /*bilinear*/ 0, /*zeros*/ 0,
                                           /*align_corners=*/false);
  const auto per_roi = sampled.view({c, k, s, s}).permute({1, 0, 2, 3});
  return torch::avg_pool2d(per_roi, 2);
}

DetectorNetImpl::DetectorNetImpl(const DetectorConfig& cfg) : config(cfg) {
  backbone = register_module("backbone", Backbone(cfg.backbone));
  const int c = backbone->out_channels;
  const bool lite = cfg.backbone == BackboneKind::kLite;
  anchors_per_cell = static_cast<int>(cfg.anchor_sizes.size() * cfg.anchor_ratios.size());

  rpn_conv = register_module("rpn_conv", conv(c, c, 3, 1, 1, true));
  rpn_cls = register_module("rpn_cls", conv(c, anchors_per_cell, 1, 1, 0, true));
  rpn_bbox = register_module("rpn_bbox", conv(c, anchors_per_cell * 4, 1, 1, 0, true));
  init_normal(rpn_conv->weight, rpn_conv->bias, 0.01);
  init_normal(rpn_cls->weight, rpn_cls->bias, 0.01);
  init_normal(rpn_bbox->weight, rpn_bbox->bias, 0.01);

  const int fc = lite ? 256 : 1024;
  fc1 = register_module("fc1", nn::Linear(c * kBoxPool * kBoxPool, fc));
  fc2 = register_module("fc2", nn::Linear(fc, fc));
  cls_score = register_module("cls_score", nn::Linear(fc, kClasses));
  bbox_pred = register_module("bbox_pred", nn::Linear(fc, kClasses * 4));
  init_normal(cls_score->weight, cls_score->bias, 0.01);
  init_normal(bbox_pred->weight, bbox_pred->bias, 0.001);

  const int mc = lite ? 32 : 256;
  const int mask_layers = lite ? 2 : 4;
  mask_convs = register_module("mask_convs", nn::Sequential());
  int in = c;
  for (int i = 0; i < mask_layers; ++i) {
    mask_convs->push_back(conv(in, mc, 3, 1, 1, true));
    mask_convs->push_back(nn::ReLU());
    in = mc;
  }
  init_kaiming(*mask_convs);
  mask_up = register_module("mask_up",
                            nn::ConvTranspose2d(nn::ConvTranspose2dOptions(mc, mc, 2).stride(2)));
  mask_logits = register_module("mask_logits", conv(mc, kClasses, 1, 1, 0, true));
}

DetectorNetImpl::Stage1 DetectorNetImpl::stage1(const torch::Tensor& images) {
  Stage1 s;
  s.fmap = backbone->forward(images);
  const auto n = s.fmap.size(0);
  const auto h = s.fmap.size(2);
  const auto w = s.fmap.size(3);
  const auto r = torch::relu(rpn_conv(s.fmap));
  s.rpn_logits = rpn_cls(r).permute({0, 2, 3, 1}).reshape({n, -1});
  s.rpn_deltas = rpn_bbox(r).permute({0, 2, 3, 1}).reshape({n, -1, 4});
  s.anchors = generate_anchors(static_cast<int>(h), static_cast<int>(w), backbone->stride,
                               config.anchor_sizes, config.anchor_ratios);
  return s;
}

torch::Tensor DetectorNetImpl::proposals(const Stage1& s, std::int64_t i, int post_nms) {
  torch::NoGradGuard no_grad;
  const auto width = static_cast<float>(config.input_size.width);
  const auto height = static_cast<float>(config.input_size.height);
  auto boxes = clip_boxes(decode_boxes(s.anchors, s.rpn_deltas[i].detach()), 0, 0, width, height);
  auto scores = s.rpn_logits[i].detach();
  const auto sizable = ((boxes.select(1, 2) - boxes.select(1, 0)) >= 1.0F) &
                       ((boxes.select(1, 3) - boxes.select(1, 1)) >= 1.0F);
  const auto idx = sizable.nonzero().squeeze(1);
  boxes = boxes.index_select(0, idx);
  scores = scores.index_select(0, idx);
  const auto order = std::get<1>(scores.sort(true, 0, true))
                         .slice(0, 0, std::min<std::int64_t>(config.pre_nms_proposals, idx.size(0)));
  boxes = boxes.index_select(0, order);
  scores = scores.index_select(0, order);
  return boxes.index_select(0, nms(boxes, scores, config.rpn_nms_iou, post_nms));
}

std::pair<torch::Tensor, torch::Tensor> DetectorNetImpl::box_head(const torch::Tensor& fmap,
                                                                  const torch::Tensor& rois) {
  auto x = roi_align(fmap, rois, kBoxPool, backbone->stride).flatten(1);
  x = torch::relu(fc2(torch::relu(fc1(x))));
  return {cls_score(x), bbox_pred(x).view({-1, kClasses, 4})};
}

torch::Tensor DetectorNetImpl::mask_head(const torch::Tensor& fmap, const torch::Tensor& rois) {
  auto x = roi_align(fmap, rois, config.mask_shape / 2, backbone->stride);
  x = torch::relu(mask_up(mask_convs->forward(x)));
  return mask_logits(x);
}

}  // namespace leafscan::detail
