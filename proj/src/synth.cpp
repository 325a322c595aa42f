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

#include "leafscan/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "leafscan/error.hpp"
#include "leafscan/geometry.hpp"

namespace leafscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Portable uniform draws; std distributions differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

struct Lesion {
  std::vector<Point> polygon;
  BBox box;
};

std::vector<Point> ellipse_polygon(double cx, double cy, double a, double b, double theta,
                                   int vertices) {
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(vertices));
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int k = 0; k < vertices; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / vertices;
    const double ex = a * std::cos(phi), ey = b * std::sin(phi);
    // Quarter-pixel grid keeps the JSON short and the values exact.
    pts.push_back({std::round((cx + ex * ct - ey * st) * 4.0) / 4.0,
                   std::round((cy + ex * st + ey * ct) * 4.0) / 4.0});
  }
  return pts;
}

bool overlaps(const BBox& a, const BBox& b, double margin) {
  return a.x_min - margin < b.x_max && b.x_min - margin < a.x_max &&
         a.y_min - margin < b.y_max && b.y_min - margin < a.y_max;
}

struct Sample {
  cv::Mat image;
  std::vector<Lesion> lesions;
};

Sample generate(Rng& rng, const SynthPreset& p) {
  Sample s;
  s.image.create(p.height, p.width, CV_8UC3);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = rng.uniform(0.15, 0.3);
  for (int y = 0; y < p.height; ++y) {
    auto* row = s.image.ptr<cv::Vec3b>(y);
    for (int x = 0; x < p.width; ++x) {
      const double stripe = 18.0 * std::sin(freq * x + 0.35 * y + phase);
      const double noise = rng.uniform(-12.0, 12.0);
      row[x] = cv::Vec3b(cv::saturate_cast<uchar>(45 + noise * 0.5),
                         cv::saturate_cast<uchar>(140 + stripe + noise),
                         cv::saturate_cast<uchar>(60 + stripe * 0.4 + noise * 0.5));
    }
  }
  if (rng.uniform() >= p.lesion_probability) {
    return s;
  }
  const int wanted = rng.integer(p.min_lesions, p.max_lesions);
  for (int attempt = 0; attempt < 60 && static_cast<int>(s.lesions.size()) < wanted; ++attempt) {
    const double a = rng.uniform(p.min_semi_axis, p.max_semi_axis);
    const double b = rng.uniform(p.min_semi_axis, p.max_semi_axis);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double r = std::max(a, b) + 2.0;
    const double cx = rng.uniform(r, p.width - r);
    const double cy = rng.uniform(r, p.height - r);
    Lesion lesion;
    if (p.rectangles) {
      const double x0 = std::round(cx - a), x1 = std::round(cx + a);
      const double y0 = std::round(cy - b), y1 = std::round(cy + b);
      lesion.polygon = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    } else {
      lesion.polygon = ellipse_polygon(cx, cy, a, b, theta, p.polygon_vertices);
    }
    lesion.box = bounding_box(lesion.polygon);
    bool clash = false;
    for (const auto& other : s.lesions) clash = clash || overlaps(lesion.box, other.box, 4.0);
    if (!clash) s.lesions.push_back(std::move(lesion));
  }
  for (const auto& lesion : s.lesions) {
    const BinaryMask mask = rasterize_polygon(lesion.polygon, {p.width, p.height});
    for (int y = 0; y < p.height; ++y) {
      auto* row = s.image.ptr<cv::Vec3b>(y);
      for (int x = 0; x < p.width; ++x) {
        if (!mask.at(x, y)) continue;
        const double noise = rng.uniform(-10.0, 10.0);
        row[x] = cv::Vec3b(cv::saturate_cast<uchar>(35 + noise * 0.5),
                           cv::saturate_cast<uchar>(70 + noise),
                           cv::saturate_cast<uchar>(120 + noise));
      }
    }
  }
  return s;
}

json labelme_document(const Sample& s, const std::string& image_name, const SynthPreset& p) {
  json shapes = json::array();
  for (const auto& lesion : s.lesions) {
    json pts = json::array();
    if (p.rectangles) {
      pts.push_back({lesion.box.x_min, lesion.box.y_min});
      pts.push_back({lesion.box.x_max, lesion.box.y_max});
    } else {
      for (const Point& pt : lesion.polygon) pts.push_back({pt.x, pt.y});
    }
    shapes.push_back({{"label", "diseased"},
                      {"points", std::move(pts)},
                      {"group_id", nullptr},
                      {"shape_type", p.rectangles ? "rectangle" : "polygon"},
                      {"flags", json::object()}});
  }
  return {{"version", "5.0.1"},
          {"flags", json::object()},
          {"shapes", std::move(shapes)},
          {"imagePath", "../images/" + image_name},
          {"imageData", nullptr},
          {"imageHeight", p.height},
          {"imageWidth", p.width}};
}

}  // namespace

SynthPreset SynthPreset::lesion_set() {
  SynthPreset p;
  p.version = "synth-v1-lesions";
  p.lesion_probability = 1.0;
  return p;
}

SynthPreset SynthPreset::rectangle_set() {
  SynthPreset p = lesion_set();
  p.version = "synth-v1-rectangles";
  p.rectangles = true;
  return p;
}

SynthSummary synth_fixtures(int count, std::uint64_t seed, const fs::path& out_dir,
                            const SynthPreset& preset) {
  if (count < 1) {
    throw ContractError("synth_fixtures: count must be at least 1");
  }
  std::vector<Sample> samples;
  std::uint64_t used = seed;
  for (;; ++used) {
    Rng rng(used);
    samples.clear();
    int diseased = 0;
    for (int i = 0; i < count; ++i) {
      samples.push_back(generate(rng, preset));
      diseased += samples.back().lesions.empty() ? 0 : 1;
    }
    const bool mixed_expected = preset.lesion_probability > 0.0 && preset.lesion_probability < 1.0;
    if (count < 2 || !mixed_expected || (diseased > 0 && diseased < count)) break;
  }

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "annotations", ec);
  if (ec || !fs::is_directory(out_dir / "images") || !fs::is_directory(out_dir / "annotations")) {
    throw IoError("cannot create output directories under " + out_dir.string());
  }

  SynthSummary summary;
  summary.seed_used = used;
  for (int i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "synth_%04d", i);
    const std::string image_name = std::string(stem) + ".png";
    const fs::path image_path = out_dir / "images" / image_name;
    if (!cv::imwrite(image_path.string(), samples[static_cast<std::size_t>(i)].image)) {
      throw IoError("cannot write " + image_path.string());
    }
    const fs::path doc_path = out_dir / "annotations" / (std::string(stem) + ".json");
    std::ofstream out(doc_path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + doc_path.string());
    }
    out << labelme_document(samples[static_cast<std::size_t>(i)], image_name, preset).dump(2)
        << '\n';
    ++summary.images;
    if (samples[static_cast<std::size_t>(i)].lesions.empty()) {
      ++summary.healthy;
    } else {
      ++summary.diseased;
    }
  }
  return summary;
}

}  // namespace leafscan
