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

#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "leafscan/annotation.hpp"
#include "leafscan/error.hpp"
#include "test_util.hpp"

namespace leafscan {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json labelme(json shapes, const std::string& image = "img.jpg", int w = 100, int h = 80) {
  return {{"version", "5.0.1"}, {"imagePath", image}, {"imageHeight", h},
          {"imageWidth", w},    {"shapes", std::move(shapes)}, {"imageData", nullptr}};
}

json shape(const std::string& label, json points, const std::string& type = "polygon") {
  return {{"label", label}, {"points", std::move(points)}, {"shape_type", type}};
}

TEST(ParseLabelme, SinglePolygon) {
  const auto doc = labelme(json::array({shape("diseased", {{10, 10}, {20, 10}, {20, 20}})}));
  const auto anns = parse_labelme(doc.dump(), {100, 80});
  ASSERT_EQ(anns.size(), 1U);
  EXPECT_EQ(anns[0].label, Label::kDiseased);
  EXPECT_EQ(anns[0].bbox, (BBox{10, 10, 20, 20}));
  EXPECT_EQ(anns[0].parent_image_id, "img");
  EXPECT_EQ(anns[0].annotation_id, "img#0");
}

TEST(ParseLabelme, NoShapes) {
  EXPECT_TRUE(parse_labelme(labelme(json::array()).dump(), {100, 80}).empty());
}

TEST(ParseLabelme, RectangleBecomesFourCorners) {
  const auto doc = labelme(json::array({shape("Healthy ", {{5, 5}, {15, 25}}, "rectangle")}));
  const auto anns = parse_labelme(doc.dump(), {100, 80});
  ASSERT_EQ(anns.size(), 1U);
  EXPECT_EQ(anns[0].label, Label::kHealthy);
  EXPECT_EQ(anns[0].points, (std::vector<Point>{{5, 5}, {15, 5}, {15, 25}, {5, 25}}));
  EXPECT_EQ(anns[0].bbox, (BBox{5, 5, 15, 25}));
}

TEST(ParseLabelme, ClampsOvershootingPoints) {
  const auto doc = labelme(json::array({shape("diseased", {{-4, 10}, {120, 10}, {50, 95}})}));
  const auto anns = parse_labelme(doc.dump(), {100, 80});
  EXPECT_EQ(anns[0].bbox, (BBox{0, 10, 100, 80}));
}

TEST(ParseLabelme, Errors) {
  EXPECT_THROW(parse_labelme("{not json", {10, 10}), ParseError);
  json missing = labelme(json::array());
  missing.erase("imageWidth");
  try {
    parse_labelme(missing.dump(), {10, 10});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("imageWidth"), std::string::npos);
  }
  try {
    parse_labelme(labelme(json::array({shape("rust", {{1, 1}, {5, 1}, {5, 5}})})).dump(),
                  {100, 80});
    FAIL();
  } catch (const LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("healthy, diseased"), std::string::npos);
  }
  EXPECT_THROW(
      parse_labelme(labelme(json::array({shape("diseased", {{1, 1}, {5, 5}, {1, 1}, {5, 5}})}))
                        .dump(),
                    {100, 80}),
      DegenerateShapeError);
  EXPECT_THROW(parse_labelme(labelme(json::array({shape("diseased", {{1, 1}, {5, 1}, {9, 1}})}))
                                 .dump(),
                             {100, 80}),
               DegenerateShapeError);
  EXPECT_THROW(
      parse_labelme(labelme(json::array({shape("diseased", {{1, 1}, {5, 1}, {9, 9}}, "circle")}))
                        .dump(),
                    {100, 80}),
      ParseError);
}

TEST(ParseLabelme, BboxIsMinMaxFoldProperty) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 220.0);
  for (int trial = 0; trial < 200; ++trial) {
    json pts = json::array();
    const int n = 3 + static_cast<int>(rng() % 10);
    for (int k = 0; k < n; ++k) pts.push_back({u(rng), u(rng)});
    const auto doc = labelme(json::array({shape("diseased", pts)}), "x.png", 200, 200);
    std::vector<PolygonAnnotation> anns;
    try {
      anns = parse_labelme(doc.dump(), {200, 200});
    } catch (const DegenerateShapeError&) {
      continue;  // heavy clamping can collapse a polygon
    }
    const auto& a = anns.at(0);
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (const auto& p : a.points) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
      EXPECT_GE(p.x, 0.0);
      EXPECT_LE(p.x, 200.0);
    }
    EXPECT_EQ(a.bbox, (BBox{x0, y0, x1, y1}));
    EXPECT_LT(a.bbox.x_min, a.bbox.x_max);
  }
}

void write_image(const fs::path& p, int w, int h) {
  fs::create_directories(p.parent_path());
  cv::imwrite(p.string(), cv::Mat(h, w, CV_8UC3, cv::Scalar(20, 120, 40)));
}

void write_doc(const fs::path& p, const json& doc) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << doc.dump();
}

TEST(BuildManifest, CountsLabelsFromAnnotations) {
  test::TempDir dir;
  for (int i = 0; i < 5; ++i) write_image(dir.path() / "images" / ("im" + std::to_string(i) + ".png"), 40, 30);
  for (int i = 0; i < 2; ++i) {
    write_doc(dir.path() / "annotations" / ("im" + std::to_string(i) + ".json"),
              labelme(json::array({shape("diseased", {{1, 1}, {10, 1}, {10, 10}})}),
                      "../images/im" + std::to_string(i) + ".png", 40, 30));
  }
  const DatasetManifest m = build_manifest(dir.path());
  ASSERT_EQ(m.records.size(), 5U);
  int diseased = 0;
  for (const auto& r : m.records) diseased += r.image_label == Label::kDiseased;
  EXPECT_EQ(diseased, 2);
  EXPECT_EQ(m.annotations.size(), 2U);
  EXPECT_EQ(m.records[0].file_path, "images/im0.png");
  EXPECT_EQ(m.records[0].width, 40);
  EXPECT_NO_THROW(validate_manifest(m));
}

TEST(BuildManifest, EmptyRoot) {
  test::TempDir dir;
  const DatasetManifest m = build_manifest(dir.path());
  EXPECT_TRUE(m.records.empty());
  EXPECT_TRUE(m.annotations.empty());
}

TEST(BuildManifest, DanglingReferenceNamesTheDocument) {
  test::TempDir dir;
  write_image(dir.path() / "images" / "a.png", 20, 20);
  write_doc(dir.path() / "annotations" / "ghost.json", labelme(json::array(), "../images/ghost.jpg"));
  try {
    build_manifest(dir.path());
    FAIL();
  } catch (const DanglingReferenceError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost.json"), std::string::npos);
  }
}

TEST(BuildManifest, DuplicateImageIdAndDirectoryConvention) {
  test::TempDir dir;
  write_image(dir.path() / "healthy" / "a.png", 20, 20);
  write_image(dir.path() / "diseased" / "b.jpg", 20, 20);
  const DatasetManifest m = build_manifest(dir.path());
  ASSERT_EQ(m.records.size(), 2U);
  EXPECT_EQ(m.find_record("b")->image_label, Label::kDiseased);
  EXPECT_EQ(m.find_record("a")->image_label, Label::kHealthy);

  write_image(dir.path() / "images" / "a.png", 20, 20);
  EXPECT_THROW(build_manifest(dir.path()), DuplicateError);
}

DatasetManifest synthetic_manifest(int diseased, int healthy) {
  DatasetManifest m;
  for (int i = 0; i < diseased + healthy; ++i) {
    ImageRecord r;
    r.image_id = "img" + std::to_string(1000 + i);
    r.file_path = "images/" + r.image_id + ".png";
    r.width = 10;
    r.height = 10;
    r.image_label = i < diseased ? Label::kDiseased : Label::kHealthy;
    m.records.push_back(r);
  }
  return m;
}

std::pair<int, int> test_counts(const DatasetManifest& m) {
  int d = 0, h = 0;
  for (const auto& r : m.records) {
    if (r.split == Split::kTest) (r.image_label == Label::kDiseased ? d : h)++;
  }
  return {d, h};
}

TEST(SplitDataset, TenRecordsStratified) {
  const auto m = split_dataset(synthetic_manifest(5, 5), 7, 0.8);
  EXPECT_EQ(m.count(Split::kTrain), 8U);
  EXPECT_EQ(m.count(Split::kTest), 2U);
  EXPECT_EQ(test_counts(m), std::make_pair(1, 1));
  EXPECT_EQ(m.split_seed, 7);
}

TEST(SplitDataset, DeterministicAndIdempotent) {
  const auto base = synthetic_manifest(37, 53);
  const auto a = split_dataset(base, 3, 0.8);
  EXPECT_EQ(a, split_dataset(base, 3, 0.8));
  EXPECT_EQ(a, split_dataset(a, 3, 0.8));
  const auto b = split_dataset(base, 4, 0.8);
  EXPECT_NE(a, b);
  EXPECT_EQ(test_counts(a), test_counts(b));
}

TEST(SplitDataset, FieldScaleTestSet) {
  const auto m = split_dataset(synthetic_manifest(850, 850), 1, 0.8);
  EXPECT_EQ(m.count(Split::kTrain), 1360U);
  EXPECT_EQ(m.count(Split::kTest), 340U);
  EXPECT_EQ(test_counts(m), std::make_pair(170, 170));
}

TEST(SplitDataset, PerClassDeviationAtMostOne) {
  for (int d = 1; d < 30; ++d) {
    for (int h = 0; h < 30; h += 7) {
      const auto m = split_dataset(synthetic_manifest(d, h), d * 31 + h, 0.8);
      const auto [td, th] = test_counts(m);
      EXPECT_LE(std::abs(td - 0.2 * d), 1.0);
      EXPECT_LE(std::abs(th - 0.2 * h), 1.0);
      const double train = static_cast<double>(m.count(Split::kTrain));
      EXPECT_LE(std::abs(train - 0.8 * (d + h)), 1.0);
    }
  }
}

TEST(SplitDataset, RejectsBadFraction) {
  EXPECT_THROW(split_dataset(synthetic_manifest(2, 2), 1, 1.0), ConfigError);
  EXPECT_THROW(split_dataset(synthetic_manifest(2, 2), 1, 0.0), ConfigError);
  EXPECT_THROW(split_dataset(DatasetManifest{}, 1, 0.5), ContractError);
}

TEST(Manifest, JsonRoundTripProperty) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = split_dataset(synthetic_manifest(3 + trial % 4, 4), trial, 0.75);
    m.records[0].capture_phase = trial % 2 ? CapturePhase::kPhase1August
                                           : CapturePhase::kPhase2September;
    for (const auto& r : m.records) {
      if (r.image_label != Label::kDiseased) continue;
      PolygonAnnotation a;
      a.parent_image_id = r.image_id;
      a.annotation_id = r.image_id + "#0";
      a.points = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
      a.bbox = bounding_box(a.points);
      m.annotations.push_back(a);
    }
    EXPECT_EQ(manifest_from_json(nlohmann::json::parse(manifest_to_json(m).dump())), m);
  }
}

TEST(Manifest, SaveLoadAndFingerprint) {
  test::TempDir dir;
  const auto m = split_dataset(synthetic_manifest(4, 6), 2, 0.8);
  save_manifest(m, dir.path() / "m.json");
  const auto back = load_manifest(dir.path() / "m.json");
  EXPECT_EQ(back, m);
  EXPECT_EQ(split_fingerprint(back), split_fingerprint(m));
  EXPECT_NE(split_fingerprint(m), split_fingerprint(split_dataset(m, 3, 0.8)));
  EXPECT_EQ(split_fingerprint(m).size(), 16U);
}

TEST(Manifest, ValidationCatchesDanglingParent) {
  auto m = synthetic_manifest(1, 1);
  PolygonAnnotation a;
  a.parent_image_id = "nope";
  a.points = {{0, 0}, {1, 0}, {1, 1}};
  a.bbox = bounding_box(a.points);
  m.annotations.push_back(a);
  EXPECT_THROW(validate_manifest(m), DanglingReferenceError);
}

TEST(ExcludeBlurred, DropsFlatImages) {
  test::TempDir dir;
  write_image(dir.path() / "images" / "flat.png", 20, 20);
  cv::Mat noisy(20, 20, CV_8UC3);
  cv::randu(noisy, cv::Scalar::all(0), cv::Scalar::all(255));
  cv::imwrite((dir.path() / "images" / "sharp.png").string(), noisy);
  const auto m = exclude_blurred(build_manifest(dir.path()), dir.path(), kDefaultBlurThreshold);
  ASSERT_EQ(m.records.size(), 1U);
  EXPECT_EQ(m.records[0].image_id, "sharp");
}

}  // namespace
}  // namespace leafscan
