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
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "leafscan/metrics.hpp"

namespace leafscan {

struct OverlayOptions {
  bool masks = true;
  bool boxes = true;
  bool scores = true;
  double mask_alpha = 0.45;
  int dash_on = 6;
  int dash_off = 4;
  int line_thickness = 2;
};

/// BGR color used for a label's box, fill and text.
cv::Scalar label_color(Label label);

/// Draws, in order, every mask fill (alpha blend toward the label color),
/// every dashed box, then every score caption. Deterministic; an empty
/// detection list returns an identical copy of `image`.
cv::Mat render_overlay(const cv::Mat& image, std::span<const Detection> detections,
                       const OverlayOptions& options = {});

std::vector<std::uint8_t> encode_png(const cv::Mat& image);

}  // namespace leafscan
