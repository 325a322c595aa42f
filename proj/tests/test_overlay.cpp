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

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "leafscan/error.hpp"
#include "leafscan/overlay.hpp"

namespace leafscan {
namespace {

cv::Mat gray(int w, int h) { return cv::Mat(h, w, CV_8UC3, cv::Scalar::all(120)); }

std::vector<std::pair<int, int>> changed_pixels(const cv::Mat& a, const cv::Mat& b) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < a.rows; ++y) {
    for (int x = 0; x < a.cols; ++x) {
      if (a.at<cv::Vec3b>(y, x) != b.at<cv::Vec3b>(y, x)) out.emplace_back(x, y);
    }
  }
  return out;
}

Detection blob_detection() {
  MiniMask mini;
  mini.side = 8;
  mini.bits.assign(64, 0);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) mini.bits[r * 8 + c] = (r - 3.5) * (r - 3.5) + (c - 3.5) * (c - 3.5) < 10;
  }
  mini.anchor_bbox = {20, 10, 52, 34};
  return {Label::kDiseased, 0.87, mini.anchor_bbox, mini};
}

TEST(Overlay, NoDetectionsLeavesImageIdentical) {
  cv::Mat img(40, 60, CV_8UC3);
  cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(256));
  const cv::Mat out = render_overlay(img, {});
  EXPECT_TRUE(changed_pixels(img, out).empty());
  EXPECT_EQ(encode_png(img), encode_png(out));
}

TEST(Overlay, MaskFillCoversExactlyTheDecodedMask) {
  const cv::Mat img = gray(80, 50);
  const Detection d = blob_detection();
  OverlayOptions o;
  o.boxes = false;
  o.scores = false;
  const auto changed = changed_pixels(img, render_overlay(img, std::span(&d, 1), o));
  const BinaryMask mask = to_full_mask(d.mask, {80, 50});
  EXPECT_EQ(static_cast<std::int64_t>(changed.size()), mask.count());
  for (const auto& [x, y] : changed) EXPECT_TRUE(mask.at(x, y));
}

TEST(Overlay, OneDetectionDrawsOneDashedBox) {
  const cv::Mat img = gray(80, 50);
  const Detection d = blob_detection();
  OverlayOptions o;
  o.masks = false;
  o.scores = false;
  const auto changed = changed_pixels(img, render_overlay(img, std::span(&d, 1), o));
  ASSERT_FALSE(changed.empty());
  // Box pixels span [20, 51] x [10, 33]; thickness 2 inward.
  int min_x = 1000, min_y = 1000, max_x = -1, max_y = -1;
  for (const auto& [x, y] : changed) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
    const bool on_band = x <= 21 || x >= 50 || y <= 11 || y >= 32;
    EXPECT_TRUE(on_band) << x << "," << y;
  }
  EXPECT_EQ(min_x, 20);
  EXPECT_EQ(min_y, 10);
  EXPECT_EQ(max_x, 51);
  EXPECT_EQ(max_y, 33);
  // Dashed: the top edge has gaps.
  int top = 0;
  for (const auto& [x, y] : changed) top += y == 10 ? 1 : 0;
  EXPECT_GT(top, 0);
  EXPECT_LT(top, 32);
}

cv::Mat golden_fixture_image() {
  cv::Mat img(120, 200, CV_8UC3);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uchar>(40 + x / 4),
                                          static_cast<uchar>(120 + (x + y) % 40),
                                          static_cast<uchar>(50 + y / 3));
    }
  }
  return img;
}

std::vector<Detection> golden_fixture_detections() {
  std::vector<Detection> dets{blob_detection()};
  BinaryMask healthy(200, 120);
  for (int y = 70; y < 100; ++y) {
    for (int x = 120; x < 170; ++x) healthy.set(x, y, (x / 5 + y / 5) % 2 == 0);
  }
  dets.push_back({Label::kHealthy, 0.615, {118.5, 68.2, 171.7, 101.0}, healthy});
  return dets;
}

TEST(Overlay, MatchesCommittedGolden) {
  const auto png =
      encode_png(render_overlay(golden_fixture_image(), golden_fixture_detections()));
  const std::string path = std::string(LEAFSCAN_TEST_DATA) + "/overlay_golden.png";
  if (std::getenv("LEAFSCAN_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(path, std::ios::binary)
        .write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing " << path;
  const std::vector<std::uint8_t> golden((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  EXPECT_EQ(png, golden);
}

TEST(Overlay, RejectsNonColorImages) {
  EXPECT_THROW(render_overlay(cv::Mat(10, 10, CV_8UC1), {}), ContractError);
  EXPECT_THROW(render_overlay(cv::Mat(), {}), ContractError);
}

}  // namespace
}  // namespace leafscan
