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

#include "leafscan/annotation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "leafscan/error.hpp"

namespace leafscan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CapturePhase phase) {
  return phase == CapturePhase::kPhase1August ? "phase1_august" : "phase2_september";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "unassigned";
}

const ImageRecord* DatasetManifest::find_record(std::string_view image_id) const {
  const auto it = std::find_if(records.begin(), records.end(),
                               [&](const ImageRecord& r) { return r.image_id == image_id; });
  return it == records.end() ? nullptr : &*it;
}

std::vector<const PolygonAnnotation*> DatasetManifest::annotations_for(
    std::string_view image_id) const {
  std::vector<const PolygonAnnotation*> out;
  for (const auto& a : annotations) {
    if (a.parent_image_id == image_id) out.push_back(&a);
  }
  return out;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ImageRecord& r) { return r.split == split; }));
}

namespace {

const json& require(const json& obj, const char* field, const std::string& where) {
  const auto it = obj.find(field);
  if (it == obj.end()) {
    throw ParseError(where + ": missing field '" + field + "'");
  }
  return *it;
}

std::vector<Point> parse_points(const json& points, const std::string& where) {
  if (!points.is_array()) {
    throw ParseError(where + ": field 'points' must be an array of [x, y] pairs");
  }
  std::vector<Point> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ParseError(where + ": field 'points' must be an array of [x, y] pairs");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

std::vector<Point> normalize_polygon(std::vector<Point> points, ImageDims dims,
                                     const std::string& where) {
  for (Point& p : points) {
    p.x = std::clamp(p.x, 0.0, static_cast<double>(dims.width));
    p.y = std::clamp(p.y, 0.0, static_cast<double>(dims.height));
  }
  std::vector<Point> dedup;
  for (const Point& p : points) {
    if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
  }
  while (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();

  std::set<std::pair<double, double>> distinct;
  for (const Point& p : dedup) distinct.emplace(p.x, p.y);
  if (distinct.size() < 3) {
    throw DegenerateShapeError(where + ": polygon has " + std::to_string(distinct.size()) +
                               " distinct points, at least 3 required");
  }
  const BBox box = bounding_box(dedup);
  if (!box.valid()) {
    throw DegenerateShapeError(where + ": polygon has a zero-width or zero-height bbox");
  }
  return dedup;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_image_file(const fs::path& p) {
  const std::string ext = lowercase(p.extension().string());
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased and independent of the
  // standard library's distribution implementation.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = 0;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

Label label_from_json(const json& v, const std::string& where) {
  if (!v.is_string()) throw ParseError(where + " must be a string");
  return parse_label(v.get<std::string>());
}

}  // namespace

std::vector<PolygonAnnotation> parse_labelme(std::string_view document, ImageDims image_dims,
                                             std::string_view image_id) {
  if (!image_dims.valid()) {
    throw ContractError("parse_labelme: image dimensions must be positive");
  }
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("LabelMe document: invalid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) {
    throw ParseError("LabelMe document: top level must be an object");
  }
  const std::string where = "LabelMe document";
  if (!require(doc, "version", where).is_string()) {
    throw ParseError(where + ": field 'version' must be a string");
  }
  const json& image_path = require(doc, "imagePath", where);
  if (!image_path.is_string()) {
    throw ParseError(where + ": field 'imagePath' must be a string");
  }
  for (const char* f : {"imageHeight", "imageWidth"}) {
    if (!require(doc, f, where).is_number_integer()) {
      throw ParseError(where + ": field '" + f + "' must be an integer");
    }
  }
  const json& shapes = require(doc, "shapes", where);
  if (!shapes.is_array()) {
    throw ParseError(where + ": field 'shapes' must be an array");
  }

  std::string id(image_id);
  if (id.empty()) {
    id = fs::path(image_path.get<std::string>()).stem().string();
  }

  std::vector<PolygonAnnotation> out;
  out.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string at = where + ": shapes[" + std::to_string(i) + "]";
    const json& shape = shapes[i];
    if (!shape.is_object()) {
      throw ParseError(at + " must be an object");
    }
    const json& label = require(shape, "label", at);
    if (!label.is_string()) {
      throw ParseError(at + ": field 'label' must be a string");
    }
    std::string shape_type = "polygon";
    if (const auto st = shape.find("shape_type"); st != shape.end() && !st->is_null()) {
      if (!st->is_string()) throw ParseError(at + ": field 'shape_type' must be a string");
      shape_type = st->get<std::string>();
    }
    std::vector<Point> points = parse_points(require(shape, "points", at), at);

    PolygonAnnotation ann;
    try {
      ann.label = parse_label(label.get<std::string>());
    } catch (const LabelError& e) {
      throw LabelError(at + ": " + e.what());
    }
    if (shape_type == "rectangle") {
      if (points.size() != 2) {
        throw ParseError(at + ": field 'points' of a rectangle must hold exactly 2 corners");
      }
      const BBox c = bounding_box(points);
      points = {{c.x_min, c.y_min}, {c.x_max, c.y_min}, {c.x_max, c.y_max}, {c.x_min, c.y_max}};
    } else if (shape_type != "polygon") {
      throw ParseError(at + ": field 'shape_type' must be \"polygon\" or \"rectangle\", got \"" +
                       shape_type + "\"");
    }
    ann.points = normalize_polygon(std::move(points), image_dims, at);
    ann.bbox = bounding_box(ann.points);
    ann.parent_image_id = id;
    ann.annotation_id = id + "#" + std::to_string(i);
    out.push_back(std::move(ann));
  }
  return out;
}

DatasetManifest build_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw IoError("dataset root is not a directory: " + root.string());
  }
  struct Found {
    fs::path path;
    std::string rel;
    bool diseased_dir = false;
  };
  std::map<std::string, Found> images;
  for (const char* sub : {"images", "healthy", "diseased"}) {
    const fs::path dir = root / sub;
    if (!fs::is_directory(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
      const std::string id = entry.path().stem().string();
      const std::string rel = fs::relative(entry.path(), root).generic_string();
      if (images.contains(id)) {
        throw DuplicateError("duplicate image_id '" + id + "': " + images.at(id).rel + " and " +
                             rel);
      }
      images.emplace(id, Found{entry.path(), rel, std::string_view(sub) == "diseased"});
    }
  }

  std::vector<fs::path> docs;
  if (const fs::path dir = root / "annotations"; fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && lowercase(entry.path().extension().string()) == ".json") {
        docs.push_back(entry.path());
      }
    }
  }
  std::sort(docs.begin(), docs.end());

  DatasetManifest manifest;
  std::map<std::string, ImageRecord> records;
  for (const auto& [id, found] : images) {
    const cv::Mat img = cv::imread(found.path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      throw IoError("cannot decode image " + found.rel);
    }
    ImageRecord rec;
    rec.image_id = id;
    rec.file_path = found.rel;
    rec.width = img.cols;
    rec.height = img.rows;
    rec.image_label = found.diseased_dir ? Label::kDiseased : Label::kHealthy;
    records.emplace(id, std::move(rec));
  }

  std::map<std::string, std::vector<PolygonAnnotation>> by_image;
  for (const fs::path& doc_path : docs) {
    const std::string text = read_file(doc_path);
    std::string image_path;
    try {
      const json doc = json::parse(text);
      image_path = doc.at("imagePath").get<std::string>();
    } catch (const json::exception&) {
      throw ParseError(doc_path.filename().string() + ": missing or invalid field 'imagePath'");
    }
    const std::string id = fs::path(image_path).stem().string();
    const auto rec = records.find(id);
    if (rec == records.end()) {
      throw DanglingReferenceError(doc_path.filename().string() +
                                   " references missing image '" + image_path + "'");
    }
    if (by_image.contains(id)) {
      throw DuplicateError(doc_path.filename().string() +
                           " is a second annotation document for image '" + id + "'");
    }
    auto anns = parse_labelme(text, rec->second.dims(), id);
    const bool diseased = std::any_of(anns.begin(), anns.end(), [](const PolygonAnnotation& a) {
      return a.label == Label::kDiseased;
    });
    rec->second.image_label = diseased ? Label::kDiseased : Label::kHealthy;
    by_image.emplace(id, std::move(anns));
  }

  for (auto& [id, rec] : records) manifest.records.push_back(std::move(rec));
  std::sort(manifest.records.begin(), manifest.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.file_path < b.file_path; });
  for (const auto& rec : manifest.records) {
    if (auto it = by_image.find(rec.image_id); it != by_image.end()) {
      for (auto& a : it->second) manifest.annotations.push_back(std::move(a));
    }
  }
  return manifest;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, std::int64_t seed,
                              double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (manifest.records.empty()) {
    throw ContractError("split_dataset requires a non-empty manifest");
  }
  DatasetManifest out = manifest;
  out.split_seed = seed;
  out.train_fraction = train_fraction;

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    by_class[static_cast<std::size_t>(out.records[i].image_label)].push_back(i);
  }
  const auto n = static_cast<double>(out.records.size());
  const auto total_train = static_cast<std::int64_t>(std::llround(n * train_fraction));

  std::array<std::int64_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::int64_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double exact = static_cast<double>(by_class[c].size()) * train_fraction;
    quota[c] = static_cast<std::int64_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  // Largest remainder first; ties go to the lower class index.
  std::array<std::size_t, 2> order{0, 1};
  if (remainder[1] > remainder[0]) order = {1, 0};
  for (std::size_t k = 0; assigned < total_train && k < 2; ++k) {
    const std::size_t c = order[k];
    if (quota[c] < static_cast<std::int64_t>(by_class[c].size())) {
      ++quota[c];
      ++assigned;
    }
  }

  for (std::size_t c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return out.records[a].image_id < out.records[b].image_id;
    });
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 2 + c);
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[bounded(rng, i)]);
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.records[idx[k]].split =
          static_cast<std::int64_t>(k) < quota[c] ? Split::kTrain : Split::kTest;
    }
  }
  return out;
}

DatasetManifest exclude_blurred(const DatasetManifest& manifest, const fs::path& root,
                                double threshold) {
  DatasetManifest out = manifest;
  out.records.clear();
  out.annotations.clear();
  std::set<std::string> kept;
  for (const auto& rec : manifest.records) {
    const cv::Mat gray = cv::imread((root / rec.file_path).string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty()) {
      throw IoError("cannot decode image " + rec.file_path);
    }
    if (passes_blur_filter(blur_score(gray), threshold)) {
      kept.insert(rec.image_id);
      out.records.push_back(rec);
    }
  }
  for (const auto& a : manifest.annotations) {
    if (kept.contains(a.parent_image_id)) out.annotations.push_back(a);
  }
  return out;
}

void validate_manifest(const DatasetManifest& manifest) {
  if (!(manifest.train_fraction > 0.0 && manifest.train_fraction < 1.0)) {
    throw ContractError("manifest train_fraction must lie in (0, 1)");
  }
  std::map<std::string, const ImageRecord*> ids;
  for (const auto& r : manifest.records) {
    if (r.width <= 0 || r.height <= 0) {
      throw ContractError("record '" + r.image_id + "' has non-positive dimensions");
    }
    if (!ids.emplace(r.image_id, &r).second) {
      throw DuplicateError("duplicate image_id '" + r.image_id + "'");
    }
  }
  for (const auto& a : manifest.annotations) {
    const auto it = ids.find(a.parent_image_id);
    if (it == ids.end()) {
      throw DanglingReferenceError("annotation '" + a.annotation_id +
                                   "' references unknown image '" + a.parent_image_id + "'");
    }
    if (a.points.size() < 3) {
      throw ContractError("annotation '" + a.annotation_id + "' has fewer than 3 points");
    }
    for (const Point& p : a.points) {
      if (p.x < 0 || p.y < 0 || p.x > it->second->width || p.y > it->second->height) {
        throw ContractError("annotation '" + a.annotation_id + "' has a point outside its image");
      }
    }
    if (!(a.bbox == bounding_box(a.points)) || !a.bbox.valid()) {
      throw ContractError("annotation '" + a.annotation_id + "' bbox does not match its points");
    }
  }
}

std::string split_fingerprint(const DatasetManifest& manifest) {
  std::vector<std::pair<std::string, Split>> pairs;
  pairs.reserve(manifest.records.size());
  for (const auto& r : manifest.records) pairs.emplace_back(r.image_id, r.split);
  std::sort(pairs.begin(), pairs.end());
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [id, split] : pairs) {
    mix(id);
    mix("\t");
    mix(to_string(split));
    mix("\n");
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

json manifest_to_json(const DatasetManifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"image_id", r.image_id},
                       {"file_path", r.file_path},
                       {"width", r.width},
                       {"height", r.height},
                       {"image_label", to_string(r.image_label)},
                       {"capture_phase", r.capture_phase ? json(to_string(*r.capture_phase))
                                                         : json(nullptr)},
                       {"split", to_string(r.split)}});
  }
  json annotations = json::array();
  for (const auto& a : manifest.annotations) {
    json pts = json::array();
    for (const Point& p : a.points) pts.push_back({p.x, p.y});
    annotations.push_back({{"annotation_id", a.annotation_id},
                           {"parent_image_id", a.parent_image_id},
                           {"label", to_string(a.label)},
                           {"points", std::move(pts)},
                           {"bbox", {a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max}}});
  }
  return {{"schema_version", "1"},
          {"split_seed", manifest.split_seed},
          {"train_fraction", manifest.train_fraction},
          {"records", std::move(records)},
          {"annotations", std::move(annotations)}};
}

DatasetManifest manifest_from_json(const json& doc) {
  const std::string where = "manifest";
  try {
    if (!doc.is_object()) throw ParseError("manifest: top level must be an object");
    const json& version = require(doc, "schema_version", where);
    if (!version.is_string() || version.get<std::string>() != "1") {
      throw ParseError("manifest: field 'schema_version' must be \"1\"");
    }
    DatasetManifest m;
    m.split_seed = require(doc, "split_seed", where).get<std::int64_t>();
    m.train_fraction = require(doc, "train_fraction", where).get<double>();
    for (const auto& r : require(doc, "records", where)) {
      ImageRecord rec;
      rec.image_id = require(r, "image_id", "manifest record").get<std::string>();
      const std::string at = "manifest record '" + rec.image_id + "'";
      rec.file_path = require(r, "file_path", at).get<std::string>();
      rec.width = require(r, "width", at).get<int>();
      rec.height = require(r, "height", at).get<int>();
      rec.image_label = label_from_json(require(r, "image_label", at), at + ": field 'image_label'");
      if (const auto cp = r.find("capture_phase"); cp != r.end() && !cp->is_null()) {
        const auto s = cp->get<std::string>();
        if (s == "phase1_august") {
          rec.capture_phase = CapturePhase::kPhase1August;
        } else if (s == "phase2_september") {
          rec.capture_phase = CapturePhase::kPhase2September;
        } else {
          throw ParseError(at + ": field 'capture_phase' has unknown value '" + s + "'");
        }
      }
      const auto split = require(r, "split", at).get<std::string>();
      if (split == "train") {
        rec.split = Split::kTrain;
      } else if (split == "test") {
        rec.split = Split::kTest;
      } else if (split == "unassigned") {
        rec.split = Split::kUnassigned;
      } else {
        throw ParseError(at + ": field 'split' has unknown value '" + split + "'");
      }
      m.records.push_back(std::move(rec));
    }
    for (const auto& a : require(doc, "annotations", where)) {
      PolygonAnnotation ann;
      ann.annotation_id = require(a, "annotation_id", "manifest annotation").get<std::string>();
      const std::string at = "manifest annotation '" + ann.annotation_id + "'";
      ann.parent_image_id = require(a, "parent_image_id", at).get<std::string>();
      ann.label = label_from_json(require(a, "label", at), at + ": field 'label'");
      ann.points = parse_points(require(a, "points", at), at);
      const json& bbox = require(a, "bbox", at);
      if (!bbox.is_array() || bbox.size() != 4) {
        throw ParseError(at + ": field 'bbox' must be [x_min, y_min, x_max, y_max]");
      }
      ann.bbox = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                  bbox[3].get<double>()};
      m.annotations.push_back(std::move(ann));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  DatasetManifest m = manifest_from_json(doc);
  validate_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << manifest_to_json(manifest).dump(2) << '\n';
}

BinaryMask annotation_mask(const PolygonAnnotation& annotation, ImageDims dims) {
  return rasterize_polygon(annotation.points, dims);
}

}  // namespace leafscan
