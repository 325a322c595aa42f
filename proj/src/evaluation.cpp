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

#include "leafscan/evaluation.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "leafscan/error.hpp"
#include "leafscan/rle.hpp"

namespace leafscan {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json detection_to_json(const Detection& detection, ImageDims dims) {
  json doc = {{"label", to_string(detection.label)},
              {"score", detection.score},
              {"bbox",
               {detection.bbox.x_min, detection.bbox.y_min, detection.bbox.x_max,
                detection.bbox.y_max}}};
  if (!std::holds_alternative<std::monostate>(detection.mask)) {
    doc["mask"] = rle_to_json(encode_rle(to_full_mask(detection.mask, dims)));
  }
  return doc;
}

Detection detection_from_json(const json& doc) {
  try {
    Detection d;
    d.label = parse_label(doc.at("label").get<std::string>());
    d.score = doc.at("score").get<double>();
    const json& b = doc.at("bbox");
    if (!b.is_array() || b.size() != 4) {
      throw ParseError("detection: field 'bbox' must be [x_min, y_min, x_max, y_max]");
    }
    d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (const auto m = doc.find("mask"); m != doc.end() && !m->is_null()) {
      d.mask = decode_rle(rle_from_json(*m));
    }
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("detection: ") + e.what());
  }
}

json predictions_to_json(const PredictionSet& predictions, const DatasetManifest& manifest) {
  json images = json::array();
  for (const auto& p : predictions.images) {
    const ImageRecord* rec = manifest.find_record(p.image_id);
    if (rec == nullptr) {
      throw ContractError("prediction for unknown image '" + p.image_id + "'");
    }
    json dets = json::array();
    for (const auto& d : p.detections) dets.push_back(detection_to_json(d, rec->dims()));
    json entry = {{"image_id", p.image_id}, {"detections", std::move(dets)}};
    if (p.classification) {
      entry["classification"] = {{"label", to_string(p.classification->label)},
                                 {"probability", p.classification->probability}};
    }
    images.push_back(std::move(entry));
  }
  return {{"schema_version", "1"},
          {"model_run_id", predictions.model_run_id},
          {"images", std::move(images)}};
}

PredictionSet predictions_from_json(const json& doc) {
  try {
    PredictionSet set;
    if (doc.at("schema_version").get<std::string>() != "1") {
      throw ParseError("predictions: field 'schema_version' must be \"1\"");
    }
    set.model_run_id = doc.value("model_run_id", std::string{});
    for (const auto& entry : doc.at("images")) {
      ImagePrediction p;
      p.image_id = entry.at("image_id").get<std::string>();
      for (const auto& d : entry.at("detections")) p.detections.push_back(detection_from_json(d));
      if (const auto c = entry.find("classification"); c != entry.end() && !c->is_null()) {
        p.classification = Classification{parse_label(c->at("label").get<std::string>()),
                                          c->at("probability").get<double>()};
      }
      set.images.push_back(std::move(p));
    }
    return set;
  } catch (const json::exception& e) {
    throw ParseError(std::string("predictions: ") + e.what());
  }
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return predictions_from_json(doc);
}

std::vector<GroundTruth> ground_truths(const DatasetManifest& manifest, const ImageRecord& record,
                                       bool with_masks) {
  std::vector<GroundTruth> out;
  for (const PolygonAnnotation* a : manifest.annotations_for(record.image_id)) {
    GroundTruth t;
    t.label = a->label;
    t.bbox = a->bbox;
    if (with_masks) t.mask = annotation_mask(*a, record.dims());
    out.push_back(std::move(t));
  }
  return out;
}

EvaluationReport evaluate(const DatasetManifest& manifest, const PredictionSet& predictions,
                          const EvaluationOptions& options) {
  std::map<std::string, const ImagePrediction*> by_id;
  for (const auto& p : predictions.images) by_id[p.image_id] = &p;

  const bool has_test = manifest.count(Split::kTest) > 0;
  EvaluationReport report;
  std::vector<Label> truth, verdicts;
  std::vector<ImageEvaluation> box_eval, mask_eval;
  bool any_detector_output = false;
  for (const auto& rec : manifest.records) {
    if (has_test && rec.split != Split::kTest) continue;
    const auto it = by_id.find(rec.image_id);
    if (it == by_id.end()) {
      throw ContractError("no prediction for evaluated image '" + rec.image_id + "'");
    }
    const ImagePrediction& pred = *it->second;
    PerImageResult r;
    r.image_id = rec.image_id;
    r.truth_label = rec.image_label;
    if (pred.classification) {
      r.verdict = pred.classification->label;
    } else {
      r.verdict = image_level_verdict(pred.detections, options.score_threshold);
      any_detector_output = true;
    }
    r.extent = damage_extent(pred.detections, rec.dims());
    truth.push_back(r.truth_label);
    verdicts.push_back(r.verdict);
    report.per_image.push_back(r);

    box_eval.push_back({pred.detections, ground_truths(manifest, rec, false), rec.dims()});
    mask_eval.push_back({pred.detections, ground_truths(manifest, rec, true), rec.dims()});
  }
  if (report.per_image.empty()) {
    throw ContractError("evaluation set is empty");
  }
  report.counts = confusion_counts(truth, verdicts);
  report.metrics = classification_metrics(report.counts);
  // A classifier localizes nothing, so it has no AP.
  if (!any_detector_output) return report;
  report.metrics.map_50 = mean_average_precision(box_eval, options.iou_threshold, IouKind::kBox);
  report.map_50_mask = mean_average_precision(mask_eval, options.iou_threshold, IouKind::kMask);
  return report;
}

json report_to_json(const EvaluationReport& report) {
  json per_image = json::array();
  for (const auto& r : report.per_image) {
    per_image.push_back({{"image_id", r.image_id},
                         {"verdict", to_string(r.verdict)},
                         {"truth_label", to_string(r.truth_label)},
                         {"extent", r.extent}});
  }
  return {{"counts",
           {{"tp", report.counts.tp},
            {"fp", report.counts.fp},
            {"fn", report.counts.fn},
            {"tn", report.counts.tn}}},
          {"metrics",
           {{"accuracy", report.metrics.accuracy},
            {"precision", report.metrics.precision},
            {"recall", report.metrics.recall},
            {"f1", report.metrics.f1},
            {"map_50", optional_number(report.metrics.map_50)},
            {"map_50_mask", optional_number(report.map_50_mask)},
            {"degenerate", report.metrics.degenerate}}},
          {"per_image", std::move(per_image)}};
}

}  // namespace leafscan
