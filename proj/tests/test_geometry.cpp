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

#include <gtest/gtest.h>

#include <random>

#include <opencv2/imgproc.hpp>

#include "leafscan/error.hpp"
#include "leafscan/geometry.hpp"
#include "oracles.hpp"

namespace leafscan {
namespace {

TEST(Rasterize, AxisAlignedSquareCoversHundredPixels) {
  const std::vector<Point> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  const BinaryMask mask = rasterize_polygon(square, {20, 20});
  EXPECT_EQ(mask.count(), 100);
  EXPECT_TRUE(mask.at(9, 9));
  EXPECT_FALSE(mask.at(10, 9));
}

TEST(Rasterize, TriangleMatchesBruteForce) {
  const std::vector<Point> tri{{0, 0}, {4, 0}, {0, 4}};
  const BinaryMask mask = rasterize_polygon(tri, {8, 8});
  // Frozen from the pnpoly oracle: centers with i + j <= 2.
  EXPECT_EQ(mask.count(), 6);
  const auto expected = oracle::rasterize(tri, 8, 8);
  EXPECT_TRUE(std::equal(expected.begin(), expected.end(), mask.bits().begin()));
}

TEST(Rasterize, ZeroAreaPolygonIsEmpty) {
  const std::vector<Point> sliver{{0, 0}, {5, 5}, {10, 10}};
  EXPECT_EQ(rasterize_polygon(sliver, {12, 12}).count(), 0);
}

TEST(Rasterize, RejectsPolygonLargerThanRaster) {
  const std::vector<Point> big{{0, 0}, {30, 0}, {30, 5}};
  EXPECT_THROW(rasterize_polygon(big, {20, 20}), DimensionError);
}

TEST(Rasterize, RandomPolygonsMatchEvenOddOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 64);
    const int h = 1 + static_cast<int>(rng() % 64);
    const auto poly = oracle::random_polygon(rng, w, h, 12);
    const BinaryMask mask = rasterize_polygon(poly, {w, h});
    const auto expected = oracle::rasterize(poly, w, h);
    ASSERT_TRUE(std::equal(expected.begin(), expected.end(), mask.bits().begin()))
        << "trial " << trial;
  }
}

TEST(BoxIou, IdenticalDisjointAndHalfOverlap) {
  const BBox a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(box_iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(box_iou(a, {20, 20, 30, 30}), 0.0);
  const double expected = oracle::grid_box_iou(0, 0, 10, 10, 5, 0, 15, 10);
  EXPECT_NEAR(expected, 50.0 / 150.0, 1e-12);
  EXPECT_NEAR(box_iou(a, {5, 0, 15, 10}), expected, 1e-12);
}

TEST(BoxIou, InvalidBoxIsContractError) {
  EXPECT_THROW(box_iou({0, 0, 0, 10}, {0, 0, 1, 1}), ContractError);
}

TEST(BoxIou, SymmetricAndBoundedOnIntegerBoxes) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 20);
  for (int i = 0; i < 200; ++i) {
    int ax0 = u(rng), ax1 = ax0 + 1 + u(rng) % 8, ay0 = u(rng), ay1 = ay0 + 1 + u(rng) % 8;
    int bx0 = u(rng), bx1 = bx0 + 1 + u(rng) % 8, by0 = u(rng), by1 = by0 + 1 + u(rng) % 8;
    const BBox a{double(ax0), double(ay0), double(ax1), double(ay1)};
    const BBox b{double(bx0), double(by0), double(bx1), double(by1)};
    const double iou = box_iou(a, b);
    EXPECT_DOUBLE_EQ(iou, box_iou(b, a));
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, oracle::grid_box_iou(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1), 1e-12);
  }
}

BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double p) {
  std::bernoulli_distribution bit(p);
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, bit(rng));
  return m;
}

TEST(MaskIou, Conventions) {
  BinaryMask empty(8, 8);
  EXPECT_DOUBLE_EQ(mask_iou(empty, empty), 1.0);
  BinaryMask some(8, 8);
  some.set(3, 3);
  EXPECT_DOUBLE_EQ(mask_iou(some, some), 1.0);
  EXPECT_DOUBLE_EQ(mask_iou(some, empty), 0.0);
  EXPECT_THROW(mask_iou(some, BinaryMask(8, 9)), ContractError);
}

TEST(MaskIou, RandomPairsMatchBitLoopOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const BinaryMask a = random_mask(rng, 16, 16, 0.4);
    const BinaryMask b = random_mask(rng, 16, 16, 0.4);
    EXPECT_DOUBLE_EQ(mask_iou(a, b), oracle::bit_loop_iou(a, b));
    EXPECT_DOUBLE_EQ(mask_iou(a, b), mask_iou(b, a));
  }
}

TEST(MiniMask, FullFrameSolidMaskEncodesToAllOnes) {
  BinaryMask full(100, 70);
  for (auto& b : full.bits()) b = 1;
  const MiniMask mini = encode_mini_mask(full, {0, 0, 100, 70});
  EXPECT_EQ(mini.side, 56);
  EXPECT_EQ(std::count(mini.bits.begin(), mini.bits.end(), 1), 56 * 56);
}

TEST(MiniMask, RectangleRoundTripsExactly) {
  BinaryMask m(120, 90);
  for (int y = 20; y < 61; ++y)
    for (int x = 30; x < 83; ++x) m.set(x, y);
  const BBox box = m.tight_bbox();
  const BinaryMask back = decode_mini_mask(encode_mini_mask(m, box), m.dims());
  EXPECT_DOUBLE_EQ(mask_iou(back, m), 1.0);
}

TEST(MiniMask, LargeRectangleRoundTripsExactly) {
  // Rectangles fill their own bbox, so size does not matter.
  BinaryMask m(400, 300);
  for (int y = 10; y < 290; ++y)
    for (int x = 5; x < 333; ++x) m.set(x, y);
  const BinaryMask back = decode_mini_mask(encode_mini_mask(m, m.tight_bbox()), m.dims());
  EXPECT_EQ(back, m);
}

TEST(MiniMask, RandomRectanglesUpToSideRoundTripExactly) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 56), h = 1 + static_cast<int>(rng() % 56);
    const int x0 = static_cast<int>(rng() % 40), y0 = static_cast<int>(rng() % 40);
    BinaryMask m(100, 100);
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) m.set(x, y);
    const BinaryMask back = decode_mini_mask(encode_mini_mask(m, m.tight_bbox()), m.dims());
    ASSERT_DOUBLE_EQ(mask_iou(back, m), 1.0) << w << "x" << h;
  }
}

TEST(MiniMask, RandomBlobsKeepIouAboveNinety) {
  std::mt19937_64 rng(2024);
  double worst = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto blob = oracle::random_blob(rng, 256, 6.0, 90.0);
    const BinaryMask m = rasterize_polygon(blob, {256, 256});
    const BinaryMask back = decode_mini_mask(encode_mini_mask(m, m.tight_bbox()), m.dims());
    worst = std::min(worst, mask_iou(back, m));
  }
  EXPECT_GE(worst, 0.9);
}

TEST(MiniMask, EmptyBboxIsContractError) {
  BinaryMask m(10, 10);
  EXPECT_THROW(encode_mini_mask(m, {3, 3, 3, 8}), ContractError);
  EXPECT_THROW(encode_mini_mask(m, {3, 3, 12, 8}), ContractError);
}

TEST(BlurScore, ConstantImageScoresZero) {
  cv::Mat flat(16, 16, CV_8UC1, cv::Scalar(77));
  EXPECT_DOUBLE_EQ(blur_score(flat), 0.0);
  EXPECT_FALSE(passes_blur_filter(blur_score(flat)));
}

TEST(BlurScore, CheckerboardSharperThanItsBoxBlur) {
  cv::Mat board(32, 32, CV_8UC1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) board.at<uchar>(y, x) = ((x + y) % 2) ? 255 : 0;
  cv::Mat blurred;
  cv::blur(board, blurred, cv::Size(2, 2));
  EXPECT_GT(blur_score(board), blur_score(blurred));
}

TEST(BlurScore, FixedFixtureMatchesDirectConvolution) {
  cv::Mat f(8, 8, CV_8UC1);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) f.at<uchar>(i, j) = static_cast<uchar>((i * 7 + j * j * 3) % 11);
  // Frozen from an independent numpy evaluation of the interior Laplacian variance.
  EXPECT_NEAR(blur_score(f), 265.52777777777777, 1e-9);
}

TEST(BlurScore, InvariantUnderConstantOffset) {
  std::mt19937_64 rng(9);
  cv::Mat img(20, 24, CV_64FC1);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) img.at<double>(y, x) = static_cast<double>(rng() % 200);
  cv::Mat shifted = img + 37.0;
  EXPECT_NEAR(blur_score(img), blur_score(shifted), 1e-9 * blur_score(img));
}

TEST(Letterbox, SquareTargetIsIdentity) {
  cv::Mat img(1024, 1024, CV_8UC3, cv::Scalar(1, 2, 3));
  const auto out = resize_letterbox(img, {1024, 1024});
  EXPECT_TRUE(out.transform.is_identity());
  EXPECT_EQ(cv::norm(out.image, img, cv::NORM_INF), 0.0);
}

TEST(Letterbox, PhoneCaptureSize) {
  const LetterboxTransform t = letterbox_transform({4032, 1960}, {1024, 1024});
  EXPECT_DOUBLE_EQ(t.scale, 1024.0 / 4032.0);
  EXPECT_EQ(t.scaled_width, 1024);
  EXPECT_EQ(t.scaled_height, 498);  // round(1960 * 1024 / 4032) = round(497.78)
  EXPECT_EQ(1024 - t.scaled_height, 526);
  EXPECT_EQ(t.pad_x, 0);
  EXPECT_EQ(t.pad_y, 263);
}

TEST(Letterbox, RandomBoxesRoundTripWithinHalfPixel) {
  const LetterboxTransform t = letterbox_transform({4032, 1960}, {1024, 1024});
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ux(0.0, 4032.0), uy(0.0, 1960.0);
  for (int i = 0; i < 50; ++i) {
    double x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng);
    const BBox box{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
    const BBox back = t.inverse(t.forward(box));
    EXPECT_LE(std::abs(back.x_min - box.x_min), 0.5);
    EXPECT_LE(std::abs(back.y_min - box.y_min), 0.5);
    EXPECT_LE(std::abs(back.x_max - box.x_max), 0.5);
    EXPECT_LE(std::abs(back.y_max - box.y_max), 0.5);
  }
}

TEST(Letterbox, ImageContentLandsInsidePadding) {
  cv::Mat img(100, 200, CV_8UC3, cv::Scalar(10, 200, 30));
  const auto out = resize_letterbox(img, {64, 64});
  EXPECT_EQ(out.image.rows, 64);
  EXPECT_EQ(out.transform.scaled_height, 32);
  EXPECT_EQ(out.transform.pad_y, 16);
  EXPECT_EQ(out.image.at<cv::Vec3b>(0, 10), cv::Vec3b(0, 0, 0));
  EXPECT_EQ(out.image.at<cv::Vec3b>(30, 10), cv::Vec3b(10, 200, 30));
}

TEST(Letterbox, MaskWarpTracksBoxTransform) {
  BinaryMask m(200, 100);
  for (int y = 20; y < 60; ++y)
    for (int x = 40; x < 120; ++x) m.set(x, y);
  const auto t = letterbox_transform(m.dims(), {64, 64});
  const BinaryMask warped = letterbox_mask(m, t);
  const BBox expected = t.forward(m.tight_bbox());
  const BBox got = warped.tight_bbox();
  EXPECT_NEAR(got.x_min, expected.x_min, 1.0);
  EXPECT_NEAR(got.y_max, expected.y_max, 1.0);
}

TEST(Crop, IntersectsWithImage) {
  cv::Mat img(50, 80, CV_8UC3, cv::Scalar::all(5));
  EXPECT_EQ(apply_crop(img, {10, 10, 100, 20}).size(), cv::Size(70, 20));
  EXPECT_THROW(apply_crop(img, {100, 0, 5, 5}), ContractError);
}

}  // namespace
}  // namespace leafscan
