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

#include "leafscan/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "leafscan/error.hpp"

namespace leafscan {

namespace {

struct IntBox {
  int x0, y0, x1, y1;  // inclusive pixel bounds
};

IntBox pixel_bounds(const BBox& b, int width, int height) {
  return {std::clamp(static_cast<int>(std::floor(b.x_min)), 0, width - 1),
          std::clamp(static_cast<int>(std::floor(b.y_min)), 0, height - 1),
          std::clamp(static_cast<int>(std::ceil(b.x_max)) - 1, 0, width - 1),
          std::clamp(static_cast<int>(std::ceil(b.y_max)) - 1, 0, height - 1)};
}

// Dashes run clockwise from the top-left corner with a continuous phase.
void draw_dashed_box(cv::Mat& img, const IntBox& b, const cv::Vec3b& color,
                     const OverlayOptions& o) {
  const int period = std::max(1, o.dash_on + o.dash_off);
  int t = 0;
  auto stamp = [&](int x, int y, int nx, int ny) {
    if (t++ % period >= o.dash_on) return;
    for (int k = 0; k < o.line_thickness; ++k) {
      const int px = x + nx * k, py = y + ny * k;
      if (px >= b.x0 && px <= b.x1 && py >= b.y0 && py <= b.y1) {
        img.at<cv::Vec3b>(py, px) = color;
      }
    }
  };
  for (int x = b.x0; x <= b.x1; ++x) stamp(x, b.y0, 0, 1);
  for (int y = b.y0 + 1; y <= b.y1; ++y) stamp(b.x1, y, -1, 0);
  for (int x = b.x1 - 1; x >= b.x0; --x) stamp(x, b.y1, 0, -1);
  for (int y = b.y1 - 1; y > b.y0; --y) stamp(b.x0, y, 1, 0);
}

}  // namespace

cv::Scalar label_color(Label label) {
  return label == Label::kDiseased ? cv::Scalar(40, 40, 230) : cv::Scalar(230, 160, 30);
}

cv::Mat render_overlay(const cv::Mat& image, std::span<const Detection> detections,
                       const OverlayOptions& options) {
  if (image.empty() || image.type() != CV_8UC3) {
    throw ContractError("overlay expects an 8-bit 3-channel image");
  }
  cv::Mat out = image.clone();
  const ImageDims dims{image.cols, image.rows};
  if (options.masks) {
    const double a = std::clamp(options.mask_alpha, 0.0, 1.0);
    for (const auto& d : detections) {
      const BinaryMask mask = to_full_mask(d.mask, dims);
      const cv::Scalar c = label_color(d.label);
      for (int y = 0; y < dims.height; ++y) {
        auto* row = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < dims.width; ++x) {
          if (!mask.at(x, y)) continue;
          for (int ch = 0; ch < 3; ++ch) {
            row[x][ch] = cv::saturate_cast<uchar>(std::lround((1.0 - a) * row[x][ch] + a * c[ch]));
          }
        }
      }
    }
  }
  if (options.boxes) {
    for (const auto& d : detections) {
      const cv::Scalar c = label_color(d.label);
      draw_dashed_box(out, pixel_bounds(d.bbox, dims.width, dims.height),
                      cv::Vec3b(static_cast<uchar>(c[0]), static_cast<uchar>(c[1]),
                                static_cast<uchar>(c[2])),
                      options);
    }
  }
  if (options.scores) {
    for (const auto& d : detections) {
      const IntBox b = pixel_bounds(d.bbox, dims.width, dims.height);
      char text[32];
      std::snprintf(text, sizeof(text), "%s %.2f", d.label == Label::kDiseased ? "D" : "H",
                    d.score);
      int baseline = 0;
      const cv::Size size = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, 0.4, 1, &baseline);
      const int y = b.y0 - 3 >= size.height ? b.y0 - 3 : std::min(dims.height - 1, b.y1 + size.height + 3);
      cv::putText(out, text, {b.x0, y}, cv::FONT_HERSHEY_SIMPLEX, 0.4, label_color(d.label), 1,
                  cv::LINE_8);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const cv::Mat& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", image, bytes, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw IoError("PNG encoding failed");
  }
  return bytes;
}

}  // namespace leafscan
