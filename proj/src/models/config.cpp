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

#include <set>
#include <string>

#include "leafscan/error.hpp"
#include "leafscan/models.hpp"

namespace leafscan {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_from(const json& v) {
  const auto s = v.get<std::string>();
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd_momentum)");
}

std::string backbone_name(BackboneKind k) {
  return k == BackboneKind::kResnet101 ? "resnet101" : "lite";
}

BackboneKind backbone_from(const json& v) {
  const auto s = v.get<std::string>();
  if (s == "resnet101") return BackboneKind::kResnet101;
  if (s == "lite") return BackboneKind::kLite;
  throw ConfigError("unknown backbone '" + s + "' (expected resnet101 or lite)");
}

json dims_json(ImageDims d) { return json::array({d.height, d.width}); }

ImageDims dims_from(const json& v) {
  if (!v.is_array() || v.size() < 2 || v.size() > 3) {
    throw ConfigError("input_size must be [height, width] or [height, width, 3]");
  }
  if (v.size() == 3 && v[2].get<int>() != 3) {
    throw ConfigError("input_size channel count must be 3");
  }
  return {v[1].get<int>(), v[0].get<int>()};
}

json crop_json(const std::optional<CropRect>& c) {
  if (!c) return nullptr;
  return {{"x", c->x}, {"y", c->y}, {"width", c->width}, {"height", c->height}};
}

std::optional<CropRect> crop_from(const json& v) {
  if (v.is_null()) return std::nullopt;
  return CropRect{v.at("x").get<int>(), v.at("y").get<int>(), v.at("width").get<int>(),
                  v.at("height").get<int>()};
}

void validate_crop(const std::optional<CropRect>& crop) {
  if (crop) {
    require(crop->x >= 0 && crop->y >= 0 && crop->width > 0 && crop->height > 0,
            "crop must have non-negative origin and positive size");
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

// Wraps nlohmann type errors so every malformed value surfaces as ConfigError.
template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

}  // namespace

void ClassifierConfig::validate() const {
  require(conv_blocks >= 1, "conv_blocks must be >= 1");
  require(base_channels >= 1, "base_channels must be >= 1");
  require(input_size.valid(), "input_size must be positive");
  require((input_size.width >> conv_blocks) >= 1 && (input_size.height >> conv_blocks) >= 1,
          "input_size too small for the number of pooling stages");
  require(epochs >= 0, "epochs must be >= 0");
  require(optimizer == OptimizerKind::kAdam, "classifier optimizer must be adam");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(batch_size >= 0, "batch_size must be >= 0 (0 = full batch)");
  validate_crop(crop);
}

void DetectorConfig::validate() const {
  require(num_classes == 2, "num_classes must be 2 (healthy, diseased)");
  require(input_size.valid() && input_size.width % 16 == 0 && input_size.height % 16 == 0,
          "input_size sides must be positive multiples of 16");
  require(mini_mask_side >= 1, "mini_mask_side must be >= 1");
  require(mask_shape >= 2 && mask_shape % 2 == 0, "mask_shape must be an even number >= 2");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(optimizer == OptimizerKind::kSgdMomentum, "detector optimizer must be sgd_momentum");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(grad_clip_norm >= 0.0, "grad_clip_norm must be >= 0 (0 disables clipping)");
  require(!anchor_sizes.empty() && !anchor_ratios.empty(), "anchor sizes and ratios required");
  for (double s : anchor_sizes) require(s > 0.0, "anchor sizes must be > 0");
  for (double r : anchor_ratios) require(r > 0.0, "anchor ratios must be > 0");
  require(rpn_anchors_per_image >= 2, "rpn_anchors_per_image must be >= 2");
  require(rpn_negative_iou > 0.0 && rpn_negative_iou <= rpn_positive_iou &&
              rpn_positive_iou <= 1.0,
          "need 0 < rpn_negative_iou <= rpn_positive_iou <= 1");
  require(rpn_nms_iou > 0.0 && rpn_nms_iou <= 1.0, "rpn_nms_iou must be in (0, 1]");
  require(pre_nms_proposals >= 1 && post_nms_proposals_train >= 1 &&
              post_nms_proposals_inference >= 1,
          "proposal counts must be >= 1");
  require(rois_per_image >= 1, "rois_per_image must be >= 1");
  require(roi_positive_fraction > 0.0 && roi_positive_fraction <= 1.0,
          "roi_positive_fraction must be in (0, 1]");
  require(roi_positive_iou > 0.0 && roi_positive_iou <= 1.0, "roi_positive_iou must be in (0, 1]");
  require(max_detections >= 1, "max_detections must be >= 1");
  require(detection_nms_iou > 0.0 && detection_nms_iou <= 1.0,
          "detection_nms_iou must be in (0, 1]");
  require(mask_threshold > 0.0 && mask_threshold < 1.0, "mask_threshold must be in (0, 1)");
  require(keep_checkpoints >= 0, "keep_checkpoints must be >= 0");
  require(!init.empty(), "init must be 'random' or a checkpoint path");
  validate_crop(crop);
}

DetectorConfig DetectorConfig::smoke() {
  DetectorConfig c;
  c.backbone = BackboneKind::kLite;
  c.input_size = {256, 256};
  c.anchor_sizes = {16, 32, 64};
  c.pre_nms_proposals = 1000;
  c.post_nms_proposals_train = 300;
  c.post_nms_proposals_inference = 100;
  c.rois_per_image = 64;
  // From scratch at desk scale, 0.001 has not converged after 60 epochs.
  c.learning_rate = 0.01;
  return c;
}

json to_json(const ClassifierConfig& c) {
  return {{"model", "classifier"},
          {"conv_blocks", c.conv_blocks},
          {"base_channels", c.base_channels},
          {"input_size", dims_json(c.input_size)},
          {"epochs", c.epochs},
          {"optimizer", optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"deterministic", c.deterministic},
          {"crop", crop_json(c.crop)}};
}

json to_json(const DetectorConfig& c) {
  return {{"model", "detector"},
          {"backbone", backbone_name(c.backbone)},
          {"num_classes", c.num_classes},
          {"input_size", dims_json(c.input_size)},
          {"mini_mask_side", c.mini_mask_side},
          {"mask_shape", c.mask_shape},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer", optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"grad_clip_norm", c.grad_clip_norm},
          {"anchor_sizes", c.anchor_sizes},
          {"anchor_ratios", c.anchor_ratios},
          {"rpn_anchors_per_image", c.rpn_anchors_per_image},
          {"rpn_positive_iou", c.rpn_positive_iou},
          {"rpn_negative_iou", c.rpn_negative_iou},
          {"rpn_nms_iou", c.rpn_nms_iou},
          {"pre_nms_proposals", c.pre_nms_proposals},
          {"post_nms_proposals_train", c.post_nms_proposals_train},
          {"post_nms_proposals_inference", c.post_nms_proposals_inference},
          {"rois_per_image", c.rois_per_image},
          {"roi_positive_fraction", c.roi_positive_fraction},
          {"roi_positive_iou", c.roi_positive_iou},
          {"max_detections", c.max_detections},
          {"detection_nms_iou", c.detection_nms_iou},
          {"mask_threshold", c.mask_threshold},
          {"horizontal_flip", c.horizontal_flip},
          {"deterministic", c.deterministic},
          {"keep_checkpoints", c.keep_checkpoints},
          {"init", c.init},
          {"crop", crop_json(c.crop)}};
}

ClassifierConfig classifier_config_from_json(const json& doc) {
  return guarded([&] {
    reject_unknown(doc, {"model", "conv_blocks", "base_channels", "input_size", "epochs",
                         "optimizer", "learning_rate", "batch_size", "deterministic", "crop"});
    if (doc.contains("model") && doc["model"] != "classifier") {
      throw ConfigError("config describes a '" + doc["model"].get<std::string>() +
                        "', expected classifier");
    }
    ClassifierConfig c;
    if (doc.contains("conv_blocks")) c.conv_blocks = doc["conv_blocks"].get<int>();
    if (doc.contains("base_channels")) c.base_channels = doc["base_channels"].get<int>();
    if (doc.contains("input_size")) c.input_size = dims_from(doc["input_size"]);
    if (doc.contains("epochs")) c.epochs = doc["epochs"].get<int>();
    if (doc.contains("optimizer")) c.optimizer = optimizer_from(doc["optimizer"]);
    if (doc.contains("learning_rate")) c.learning_rate = doc["learning_rate"].get<double>();
    if (doc.contains("batch_size")) c.batch_size = doc["batch_size"].get<int>();
    if (doc.contains("deterministic")) c.deterministic = doc["deterministic"].get<bool>();
    if (doc.contains("crop")) c.crop = crop_from(doc["crop"]);
    c.validate();
    return c;
  });
}

DetectorConfig detector_config_from_json(const json& doc) {
  return guarded([&] {
    const json defaults = to_json(DetectorConfig{});
    std::set<std::string> known;
    for (const auto& [key, _] : defaults.items()) known.insert(key);
    known.insert("preset");
    reject_unknown(doc, known);
    if (doc.contains("model") && doc["model"] != "detector") {
      throw ConfigError("config describes a '" + doc["model"].get<std::string>() +
                        "', expected detector");
    }
    DetectorConfig c;
    if (doc.contains("preset")) {
      const auto preset = doc["preset"].get<std::string>();
      if (preset == "smoke") {
        c = DetectorConfig::smoke();
      } else if (preset != "default") {
        throw ConfigError("unknown detector preset '" + preset + "' (expected default or smoke)");
      }
    }
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc[key].get<std::decay_t<decltype(field)>>();
    };
    if (doc.contains("backbone")) c.backbone = backbone_from(doc["backbone"]);
    get("num_classes", c.num_classes);
    if (doc.contains("input_size")) c.input_size = dims_from(doc["input_size"]);
    get("mini_mask_side", c.mini_mask_side);
    get("mask_shape", c.mask_shape);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    if (doc.contains("optimizer")) c.optimizer = optimizer_from(doc["optimizer"]);
    get("learning_rate", c.learning_rate);
    get("momentum", c.momentum);
    get("weight_decay", c.weight_decay);
    get("grad_clip_norm", c.grad_clip_norm);
    get("anchor_sizes", c.anchor_sizes);
    get("anchor_ratios", c.anchor_ratios);
    get("rpn_anchors_per_image", c.rpn_anchors_per_image);
    get("rpn_positive_iou", c.rpn_positive_iou);
    get("rpn_negative_iou", c.rpn_negative_iou);
    get("rpn_nms_iou", c.rpn_nms_iou);
    get("pre_nms_proposals", c.pre_nms_proposals);
    get("post_nms_proposals_train", c.post_nms_proposals_train);
    get("post_nms_proposals_inference", c.post_nms_proposals_inference);
    get("rois_per_image", c.rois_per_image);
    get("roi_positive_fraction", c.roi_positive_fraction);
    get("roi_positive_iou", c.roi_positive_iou);
    get("max_detections", c.max_detections);
    get("detection_nms_iou", c.detection_nms_iou);
    get("mask_threshold", c.mask_threshold);
    get("horizontal_flip", c.horizontal_flip);
    get("deterministic", c.deterministic);
    get("keep_checkpoints", c.keep_checkpoints);
    get("init", c.init);
    if (doc.contains("crop")) c.crop = crop_from(doc["crop"]);
    c.validate();
    return c;
  });
}

Label label_from_probability(double probability) {
  return probability >= 0.5 ? Label::kDiseased : Label::kHealthy;
}

}  // namespace leafscan
