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

#include "box_ops.hpp"

#include <cmath>

namespace leafscan::detail {

namespace {

// Caps exp() in decode so a wild delta cannot overflow.
const double kMaxLogScale = std::log(1000.0 / 16.0);

torch::Tensor std_tensor() { return torch::tensor({kBoxStd[0], kBoxStd[1], kBoxStd[2], kBoxStd[3]}); }

}  // namespace

torch::Tensor generate_anchors(int feat_h, int feat_w, double stride,
                               const std::vector<double>& sizes,
                               const std::vector<double>& ratios) {
  std::vector<float> base;
  for (double s : sizes) {
    for (double r : ratios) {
      const double h = s * std::sqrt(r);
      const double w = s / std::sqrt(r);
      base.insert(base.end(), {static_cast<float>(-w / 2), static_cast<float>(-h / 2),
                               static_cast<float>(w / 2), static_cast<float>(h / 2)});
    }
  }
  const auto a = static_cast<std::int64_t>(base.size() / 4);
  const auto cell = torch::tensor(base).view({1, 1, a, 4});
  const auto ys = (torch::arange(feat_h, torch::kFloat32) + 0.5F) * static_cast<float>(stride);
  const auto xs = (torch::arange(feat_w, torch::kFloat32) + 0.5F) * static_cast<float>(stride);
  const auto cy = ys.view({feat_h, 1, 1}).expand({feat_h, feat_w, 1});
  const auto cx = xs.view({1, feat_w, 1}).expand({feat_h, feat_w, 1});
  const auto centers = torch::cat({cx, cy, cx, cy}, 2).view({feat_h, feat_w, 1, 4});
  return (centers + cell).reshape({-1, 4});
}

torch::Tensor iou_matrix(const torch::Tensor& a, const torch::Tensor& b) {
  const auto area = [](const torch::Tensor& t) {
    return (t.select(1, 2) - t.select(1, 0)).clamp_min(0) *
           (t.select(1, 3) - t.select(1, 1)).clamp_min(0);
  };
  const auto lt = torch::max(a.slice(1, 0, 2).unsqueeze(1), b.slice(1, 0, 2).unsqueeze(0));
  const auto rb = torch::min(a.slice(1, 2, 4).unsqueeze(1), b.slice(1, 2, 4).unsqueeze(0));
  const auto wh = (rb - lt).clamp_min(0);
  const auto inter = wh.select(2, 0) * wh.select(2, 1);
  const auto uni = area(a).unsqueeze(1) + area(b).unsqueeze(0) - inter;
  return inter / uni.clamp_min(1e-9);
}

torch::Tensor encode_boxes(const torch::Tensor& reference, const torch::Tensor& target) {
  const auto rw = reference.select(1, 2) - reference.select(1, 0);
  const auto rh = reference.select(1, 3) - reference.select(1, 1);
  const auto rx = reference.select(1, 0) + 0.5 * rw;
  const auto ry = reference.select(1, 1) + 0.5 * rh;
  const auto tw = target.select(1, 2) - target.select(1, 0);
  const auto th = target.select(1, 3) - target.select(1, 1);
  const auto tx = target.select(1, 0) + 0.5 * tw;
  const auto ty = target.select(1, 1) + 0.5 * th;
  const auto d = torch::stack({(tx - rx) / rw, (ty - ry) / rh, torch::log(tw / rw),
                               torch::log(th / rh)},
                              1);
  return d / std_tensor();
}

torch::Tensor decode_boxes(const torch::Tensor& reference, const torch::Tensor& deltas) {
  const auto d = deltas * std_tensor();
  const auto rw = reference.select(1, 2) - reference.select(1, 0);
  const auto rh = reference.select(1, 3) - reference.select(1, 1);
  const auto rx = reference.select(1, 0) + 0.5 * rw;
  const auto ry = reference.select(1, 1) + 0.5 * rh;
  const auto cx = rx + d.select(1, 0) * rw;
  const auto cy = ry + d.select(1, 1) * rh;
  const auto w = rw * torch::exp(d.select(1, 2).clamp_max(kMaxLogScale));
  const auto h = rh * torch::exp(d.select(1, 3).clamp_max(kMaxLogScale));
  return torch::stack({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}, 1);
}

torch::Tensor clip_boxes(const torch::Tensor& boxes, float x1, float y1, float x2, float y2) {
  return torch::stack({boxes.select(1, 0).clamp(x1, x2), boxes.select(1, 1).clamp(y1, y2),
                       boxes.select(1, 2).clamp(x1, x2), boxes.select(1, 3).clamp(y1, y2)},
                      1);
}

torch::Tensor nms(const torch::Tensor& boxes, const torch::Tensor& scores, double iou_threshold,
                  std::int64_t max_keep) {
  const auto n = boxes.size(0);
  if (n == 0) return torch::empty({0}, torch::kInt64);
  const auto order = std::get<1>(scores.sort(/*stable=*/true, 0, /*descending=*/true));
  const auto b = boxes.to(torch::kFloat64).contiguous();
  const auto bb = b.accessor<double, 2>();
  const auto ord = order.accessor<std::int64_t, 1>();
  std::vector<char> suppressed(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> keep;
  for (std::int64_t i = 0; i < n && static_cast<std::int64_t>(keep.size()) < max_keep; ++i) {
    const auto p = ord[i];
    if (suppressed[static_cast<std::size_t>(p)]) continue;
    keep.push_back(p);
    const double area_p = std::max(0.0, bb[p][2] - bb[p][0]) * std::max(0.0, bb[p][3] - bb[p][1]);
    for (std::int64_t j = i + 1; j < n; ++j) {
      const auto q = ord[j];
      if (suppressed[static_cast<std::size_t>(q)]) continue;
      const double iw = std::min(bb[p][2], bb[q][2]) - std::max(bb[p][0], bb[q][0]);
      const double ih = std::min(bb[p][3], bb[q][3]) - std::max(bb[p][1], bb[q][1]);
      if (iw <= 0 || ih <= 0) continue;
      const double inter = iw * ih;
      const double area_q =
          std::max(0.0, bb[q][2] - bb[q][0]) * std::max(0.0, bb[q][3] - bb[q][1]);
      if (inter / (area_p + area_q - inter) > iou_threshold) {
        suppressed[static_cast<std::size_t>(q)] = 1;
      }
    }
  }
  return torch::tensor(keep, torch::kInt64);
}

}  // namespace leafscan::detail
