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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leafscan/common.hpp"
#include "leafscan/geometry.hpp"

namespace leafscan {

enum class CapturePhase : std::uint8_t { kPhase1August, kPhase2September };
enum class Split : std::uint8_t { kUnassigned, kTrain, kTest };

std::string_view to_string(CapturePhase phase);
std::string_view to_string(Split split);

struct ImageRecord {
  std::string image_id;
  std::string file_path;  // relative to the dataset root, '/'-separated
  int width = 0;
  int height = 0;
  Label image_label = Label::kHealthy;
  std::optional<CapturePhase> capture_phase;
  Split split = Split::kUnassigned;

  [[nodiscard]] ImageDims dims() const { return {width, height}; }
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct PolygonAnnotation {
  std::string annotation_id;
  std::string parent_image_id;
  Label label = Label::kDiseased;
  std::vector<Point> points;
  BBox bbox;

  friend bool operator==(const PolygonAnnotation&, const PolygonAnnotation&) = default;
};

inline constexpr double kDefaultTrainFraction = 0.8;

struct DatasetManifest {
  std::vector<ImageRecord> records;
  std::vector<PolygonAnnotation> annotations;
  std::int64_t split_seed = 0;
  double train_fraction = kDefaultTrainFraction;

  [[nodiscard]] const ImageRecord* find_record(std::string_view image_id) const;
  [[nodiscard]] std::vector<const PolygonAnnotation*> annotations_for(
      std::string_view image_id) const;
  [[nodiscard]] std::size_t count(Split split) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Parses one LabelMe document. Points are clamped to `image_dims`,
/// consecutive duplicates are dropped, and rectangles become 4-point polygons.
/// `image_id` defaults to the stem of the document's imagePath.
///
/// Throws ParseError (naming the field), LabelError, or DegenerateShapeError.
std::vector<PolygonAnnotation> parse_labelme(std::string_view document, ImageDims image_dims,
                                             std::string_view image_id = {});

/// Scans <root>/images, <root>/healthy, <root>/diseased for .jpg/.jpeg/.png
/// images and <root>/annotations for LabelMe documents. Records are ordered
/// by relative file path.
DatasetManifest build_manifest(const std::filesystem::path& root);

/// Stratified, seed-deterministic train/test assignment. The total train
/// count is round(n * train_fraction), apportioned to classes by largest
/// remainder. Throws ConfigError for a fraction outside (0, 1).
DatasetManifest split_dataset(const DatasetManifest& manifest, std::int64_t seed,
                              double train_fraction);

/// Drops records whose grayscale blur score does not exceed `threshold`,
/// together with their annotations.
DatasetManifest exclude_blurred(const DatasetManifest& manifest,
                                const std::filesystem::path& root, double threshold);

/// Throws ContractError on a broken invariant (dangling parent, bad bbox, ...).
void validate_manifest(const DatasetManifest& manifest);

/// Order-independent FNV-1a digest of (image_id, split) pairs, hex encoded.
std::string split_fingerprint(const DatasetManifest& manifest);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Rasterizes one annotation at its parent image's dimensions.
BinaryMask annotation_mask(const PolygonAnnotation& annotation, ImageDims dims);

}  // namespace leafscan
