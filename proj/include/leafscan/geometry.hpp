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
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "leafscan/common.hpp"

namespace leafscan {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box in pixel coordinates, edges on the continuous grid: a
/// pixel (col j, row i) covers [j, j+1) x [i, i+1).
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  [[nodiscard]] bool valid() const { return x_min < x_max && y_min < y_max; }
  [[nodiscard]] double width() const { return x_max - x_min; }
  [[nodiscard]] double height() const { return y_max - y_min; }
  [[nodiscard]] double area() const { return valid() ? width() * height() : 0.0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Min/max fold over `points`. Empty input yields a zero box.
BBox bounding_box(std::span<const Point> points);

/// Row-major binary grid.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  explicit BinaryMask(ImageDims dims) : BinaryMask(dims.width, dims.height) {}

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] ImageDims dims() const { return {width_, height_}; }
  [[nodiscard]] bool empty_grid() const { return bits_.empty(); }

  [[nodiscard]] bool at(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool value = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }

  [[nodiscard]] std::int64_t count() const;
  [[nodiscard]] std::span<const std::uint8_t> bits() const { return bits_; }
  [[nodiscard]] std::span<std::uint8_t> bits() { return bits_; }

  /// Tight integer box around set pixels; invalid box when nothing is set.
  [[nodiscard]] BBox tight_bbox() const;

  BinaryMask& operator|=(const BinaryMask& other);

  /// CV_8UC1 view copy with 255 for set pixels.
  [[nodiscard]] cv::Mat to_mat() const;
  static BinaryMask from_mat(const cv::Mat& mat);

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline constexpr int kDefaultMiniMaskSide = 56;

/// Mask stored at fixed resolution and registered to `anchor_bbox`.
struct MiniMask {
  int side = kDefaultMiniMaskSide;
  std::vector<std::uint8_t> bits;  // side * side, row-major
  BBox anchor_bbox;

  [[nodiscard]] bool at(int col, int row) const {
    return bits[static_cast<std::size_t>(row) * side + col] != 0;
  }
  friend bool operator==(const MiniMask&, const MiniMask&) = default;
};

/// Sets pixel (row i, col j) iff its center (j + 0.5, i + 0.5) is inside the
/// polygon under the even-odd rule. Throws DimensionError when the polygon
/// bbox exceeds `dims`.
BinaryMask rasterize_polygon(std::span<const Point> polygon, ImageDims dims);

/// Throws ContractError on an invalid box.
double box_iou(const BBox& a, const BBox& b);

/// |a & b| / |a | b|, 1.0 when both are empty. Throws ContractError on a
/// dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Integer pixel window [x0, x1) x [y0, y1) covered by a continuous box.
struct PixelWindow {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  [[nodiscard]] int width() const { return x1 - x0; }
  [[nodiscard]] int height() const { return y1 - y0; }
};
PixelWindow pixel_window(const BBox& box);

/// Crops `full` to `bbox` and resamples to side x side, nearest neighbour.
/// Windows no larger than `side` survive decode(encode(m)) exactly.
MiniMask encode_mini_mask(const BinaryMask& full, const BBox& bbox,
                          int side = kDefaultMiniMaskSide);

/// Resamples the mini-mask back onto its anchor window and pastes it into an
/// all-zero mask of `dims`. Parts of the window outside `dims` are dropped.
BinaryMask decode_mini_mask(const MiniMask& mini, ImageDims dims);

/// Variance of the 3x3 discrete Laplacian over interior pixels. Images smaller
/// than 3x3 score 0. Accepts any single-channel depth.
double blur_score(const cv::Mat& gray);

/// Score-threshold test used to drop blurred images: keeps iff score > threshold.
inline constexpr double kDefaultBlurThreshold = 0.0;
inline bool passes_blur_filter(double score, double threshold = kDefaultBlurThreshold) {
  return score > threshold;
}

/// Operator-supplied fixed crop (removes roads and sky from a batch).
struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};
/// Intersects `rect` with the image; throws ContractError when empty.
cv::Mat apply_crop(const cv::Mat& image, const CropRect& rect);

/// Aspect-preserving resize into a padded square (or rectangular) canvas,
/// image centered.
struct LetterboxTransform {
  ImageDims source;
  ImageDims target;
  double scale = 1.0;
  int pad_x = 0;  // left padding
  int pad_y = 0;  // top padding
  int scaled_width = 0;
  int scaled_height = 0;

  [[nodiscard]] bool is_identity() const {
    return scale == 1.0 && pad_x == 0 && pad_y == 0 && source == target;
  }
  [[nodiscard]] Point forward(Point p) const;
  [[nodiscard]] Point inverse(Point p) const;
  [[nodiscard]] BBox forward(const BBox& box) const;
  /// Maps back into source coordinates, clamped to the source image.
  [[nodiscard]] BBox inverse(const BBox& box) const;
};

LetterboxTransform letterbox_transform(ImageDims source, ImageDims target);

struct LetterboxedImage {
  cv::Mat image;
  LetterboxTransform transform;
};
LetterboxedImage resize_letterbox(const cv::Mat& image, ImageDims target = {1024, 1024});

/// Nearest-neighbour warp of a source-space mask into letterboxed space.
BinaryMask letterbox_mask(const BinaryMask& mask, const LetterboxTransform& t);

}  // namespace leafscan
