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

#include "leafscan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/imgproc.hpp>

#include "leafscan/error.hpp"

namespace leafscan {

BBox bounding_box(std::span<const Point> points) {
  if (points.empty()) {
    return {};
  }
  BBox box{points[0].x, points[0].y, points[0].x, points[0].y};
  for (const Point& p : points.subspan(1)) {
    box.x_min = std::min(box.x_min, p.x);
    box.y_min = std::min(box.y_min, p.y);
    box.x_max = std::max(box.x_max, p.x);
    box.y_max = std::max(box.y_max, p.y);
  }
  return box;
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw ContractError("mask dimensions must be non-negative");
  }
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::int64_t BinaryMask::count() const {
  return std::count_if(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

BBox BinaryMask::tight_bbox() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) {
    return {};
  }
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
          static_cast<double>(y1 + 1)};
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  if (other.dims() != dims()) {
    throw ContractError("mask union requires equal dimensions");
  }
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    bits_[i] = static_cast<std::uint8_t>(bits_[i] | other.bits_[i]);
  }
  return *this;
}

cv::Mat BinaryMask::to_mat() const {
  cv::Mat mat(height_, width_, CV_8UC1);
  for (int y = 0; y < height_; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < width_; ++x) {
      row[x] = at(x, y) ? 255 : 0;
    }
  }
  return mat;
}

BinaryMask BinaryMask::from_mat(const cv::Mat& mat) {
  if (mat.type() != CV_8UC1) {
    throw ContractError("BinaryMask::from_mat expects CV_8UC1");
  }
  BinaryMask mask(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      mask.set(x, y, row[x] != 0);
    }
  }
  return mask;
}

BinaryMask rasterize_polygon(std::span<const Point> polygon, ImageDims dims) {
  if (!dims.valid()) {
    throw DimensionError("rasterization target must have positive dimensions");
  }
  const BBox box = bounding_box(polygon);
  if (!polygon.empty() && (box.x_min < 0.0 || box.y_min < 0.0 || box.x_max > dims.width ||
                           box.y_max > dims.height)) {
    throw DimensionError("polygon bbox exceeds raster dimensions " +
                         std::to_string(dims.width) + "x" + std::to_string(dims.height));
  }
  BinaryMask mask(dims);
  const std::size_t n = polygon.size();
  if (n < 3) {
    return mask;
  }
  const int row_begin = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int row_end = std::min(dims.height, static_cast<int>(std::ceil(box.y_max)) + 1);
  std::vector<double> crossings;
  for (int row = row_begin; row < row_end; ++row) {
    const double py = row + 0.5;
    crossings.clear();
    for (std::size_t k = 0, prev = n - 1; k < n; prev = k++) {
      const Point& a = polygon[k];
      const Point& b = polygon[prev];
      if ((a.y > py) != (b.y > py)) {
        crossings.push_back((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
      }
    }
    if (crossings.empty()) {
      continue;
    }
    std::sort(crossings.begin(), crossings.end());
    for (int col = 0; col < dims.width; ++col) {
      const double px = col + 0.5;
      // A center is inside iff an odd number of crossings lie strictly to its right.
      const auto right = crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), px);
      if (right % 2 == 1) {
        mask.set(col, row);
      }
    }
  }
  return mask;
}

double box_iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) {
    throw ContractError("box_iou requires min < max on both axes");
  }
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.dims() != b.dims()) {
    throw ContractError("mask_iou requires equal dimensions");
  }
  std::int64_t inter = 0, uni = 0;
  const auto ab = a.bits();
  const auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += (ab[i] & bb[i]) != 0;
    uni += (ab[i] | bb[i]) != 0;
  }
  if (uni == 0) {
    return 1.0;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

PixelWindow pixel_window(const BBox& box) {
  return {static_cast<int>(std::floor(box.x_min)), static_cast<int>(std::floor(box.y_min)),
          static_cast<int>(std::ceil(box.x_max)), static_cast<int>(std::ceil(box.y_max))};
}

MiniMask encode_mini_mask(const BinaryMask& full, const BBox& bbox, int side) {
  if (side <= 0) {
    throw ContractError("mini-mask side must be positive");
  }
  if (!bbox.valid()) {
    throw ContractError("mini-mask encoding requires a non-empty bbox");
  }
  const PixelWindow win = pixel_window(bbox);
  if (win.x0 < 0 || win.y0 < 0 || win.x1 > full.width() || win.y1 > full.height()) {
    throw ContractError("mini-mask bbox lies outside the mask");
  }
  const std::int64_t w = win.width();
  const std::int64_t h = win.height();
  MiniMask mini;
  mini.side = side;
  mini.anchor_bbox = bbox;
  mini.bits.assign(static_cast<std::size_t>(side) * side, 0);
  for (int r = 0; r < side; ++r) {
    const int sy = win.y0 + static_cast<int>(((2 * r + 1) * h) / (2 * side));
    for (int c = 0; c < side; ++c) {
      const int sx = win.x0 + static_cast<int>(((2 * c + 1) * w) / (2 * side));
      mini.bits[static_cast<std::size_t>(r) * side + c] = full.at(sx, sy) ? 1 : 0;
    }
  }
  return mini;
}

BinaryMask decode_mini_mask(const MiniMask& mini, ImageDims dims) {
  if (!mini.anchor_bbox.valid()) {
    throw ContractError("mini-mask anchor bbox is empty");
  }
  if (mini.bits.size() != static_cast<std::size_t>(mini.side) * mini.side) {
    throw ContractError("mini-mask bit count does not match its side");
  }
  BinaryMask out(dims);
  const PixelWindow win = pixel_window(mini.anchor_bbox);
  const std::int64_t w = win.width();
  const std::int64_t h = win.height();
  const std::int64_t side = mini.side;
  for (int y = std::max(0, win.y0); y < std::min(dims.height, win.y1); ++y) {
    const int r = static_cast<int>(((2 * (y - win.y0) + 1) * side) / (2 * h));
    for (int x = std::max(0, win.x0); x < std::min(dims.width, win.x1); ++x) {
      const int c = static_cast<int>(((2 * (x - win.x0) + 1) * side) / (2 * w));
      if (mini.at(c, r)) {
        out.set(x, y);
      }
    }
  }
  return out;
}

double blur_score(const cv::Mat& gray) {
  if (gray.empty()) {
    throw ContractError("blur_score requires a non-empty image");
  }
  if (gray.channels() != 1) {
    throw ContractError("blur_score expects a single-channel image");
  }
  if (gray.rows < 3 || gray.cols < 3) {
    return 0.0;
  }
  cv::Mat f;
  gray.convertTo(f, CV_64F);
  const int rows = f.rows - 2;
  const int cols = f.cols - 2;
  std::vector<double> response;
  response.reserve(static_cast<std::size_t>(rows) * cols);
  for (int y = 1; y <= rows; ++y) {
    const auto* up = f.ptr<double>(y - 1);
    const auto* mid = f.ptr<double>(y);
    const auto* down = f.ptr<double>(y + 1);
    for (int x = 1; x <= cols; ++x) {
      response.push_back(up[x] + down[x] + mid[x - 1] + mid[x + 1] - 4.0 * mid[x]);
    }
  }
  double mean = 0.0;
  for (double v : response) mean += v;
  mean /= static_cast<double>(response.size());
  double var = 0.0;
  for (double v : response) var += (v - mean) * (v - mean);
  return var / static_cast<double>(response.size());
}

cv::Mat apply_crop(const cv::Mat& image, const CropRect& rect) {
  const cv::Rect roi = cv::Rect(rect.x, rect.y, rect.width, rect.height) &
                       cv::Rect(0, 0, image.cols, image.rows);
  if (roi.empty()) {
    throw ContractError("crop rectangle does not intersect the image");
  }
  return image(roi).clone();
}

Point LetterboxTransform::forward(Point p) const {
  return {p.x * scale + pad_x, p.y * scale + pad_y};
}

Point LetterboxTransform::inverse(Point p) const {
  return {(p.x - pad_x) / scale, (p.y - pad_y) / scale};
}

BBox LetterboxTransform::forward(const BBox& box) const {
  const Point a = forward(Point{box.x_min, box.y_min});
  const Point b = forward(Point{box.x_max, box.y_max});
  return {a.x, a.y, b.x, b.y};
}

BBox LetterboxTransform::inverse(const BBox& box) const {
  const Point a = inverse(Point{box.x_min, box.y_min});
  const Point b = inverse(Point{box.x_max, box.y_max});
  const double w = source.width;
  const double h = source.height;
  return {std::clamp(a.x, 0.0, w), std::clamp(a.y, 0.0, h), std::clamp(b.x, 0.0, w),
          std::clamp(b.y, 0.0, h)};
}

LetterboxTransform letterbox_transform(ImageDims source, ImageDims target) {
  if (!source.valid() || !target.valid()) {
    throw ContractError("letterbox requires positive dimensions");
  }
  LetterboxTransform t;
  t.source = source;
  t.target = target;
  if (source == target) {
    t.scaled_width = source.width;
    t.scaled_height = source.height;
    return t;
  }
  t.scale = std::min(static_cast<double>(target.width) / source.width,
                     static_cast<double>(target.height) / source.height);
  t.scaled_width = std::clamp(static_cast<int>(std::lround(source.width * t.scale)), 1, target.width);
  t.scaled_height =
      std::clamp(static_cast<int>(std::lround(source.height * t.scale)), 1, target.height);
  t.pad_x = (target.width - t.scaled_width) / 2;
  t.pad_y = (target.height - t.scaled_height) / 2;
  return t;
}

LetterboxedImage resize_letterbox(const cv::Mat& image, ImageDims target) {
  if (image.empty()) {
    throw ContractError("resize_letterbox requires a non-empty image");
  }
  LetterboxedImage out;
  out.transform = letterbox_transform({image.cols, image.rows}, target);
  const LetterboxTransform& t = out.transform;
  if (t.is_identity()) {
    out.image = image.clone();
    return out;
  }
  cv::Mat scaled;
  const int interp = t.scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(image, scaled, cv::Size(t.scaled_width, t.scaled_height), 0, 0, interp);
  out.image = cv::Mat::zeros(target.height, target.width, image.type());
  scaled.copyTo(out.image(cv::Rect(t.pad_x, t.pad_y, t.scaled_width, t.scaled_height)));
  return out;
}

BinaryMask letterbox_mask(const BinaryMask& mask, const LetterboxTransform& t) {
  if (mask.dims() != t.source) {
    throw ContractError("mask does not match the letterbox source dimensions");
  }
  if (t.is_identity()) {
    return mask;
  }
  BinaryMask out(t.target);
  for (int y = t.pad_y; y < t.pad_y + t.scaled_height; ++y) {
    const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5 - t.pad_y) / t.scale)), 0,
                              mask.height() - 1);
    for (int x = t.pad_x; x < t.pad_x + t.scaled_width; ++x) {
      const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5 - t.pad_x) / t.scale)), 0,
                                mask.width() - 1);
      if (mask.at(sx, sy)) {
        out.set(x, y);
      }
    }
  }
  return out;
}

}  // namespace leafscan
