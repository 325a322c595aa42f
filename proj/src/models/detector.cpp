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

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>

#include <opencv2/core.hpp>

#include "box_ops.hpp"
#include "detector_net.hpp"
#include "internal.hpp"
#include "leafscan/error.hpp"

namespace leafscan {

namespace fs = std::filesystem;

namespace detail {

namespace {

struct GtInstances {
  torch::Tensor boxes;    // [G, 4] float
  torch::Tensor labels;   // [G] int64, 1 healthy / 2 diseased
  torch::Tensor windows;  // [G, 4] int64 pixel windows (x0, y0, x1, y1)
  torch::Tensor minis;    // [G, side, side] float
};

GtInstances pack_instances(const std::vector<BinaryMask>& masks, const std::vector<Label>& labels,
                           int side) {
  std::vector<float> boxes;
  std::vector<std::int64_t> cls;
  std::vector<std::int64_t> windows;
  std::vector<torch::Tensor> minis;
  for (std::size_t g = 0; g < masks.size(); ++g) {
    const BBox box = masks[g].tight_bbox();
    if (!box.valid()) continue;
    const MiniMask mini = encode_mini_mask(masks[g], box, side);
    const PixelWindow w = pixel_window(box);
    boxes.insert(boxes.end(), {static_cast<float>(box.x_min), static_cast<float>(box.y_min),
                               static_cast<float>(box.x_max), static_cast<float>(box.y_max)});
    cls.push_back(class_index(labels[g]));
    windows.insert(windows.end(), {w.x0, w.y0, w.x1, w.y1});
    std::vector<float> bits(mini.bits.begin(), mini.bits.end());
    minis.push_back(torch::tensor(bits).view({side, side}));
  }
  GtInstances gt;
  const auto g = static_cast<std::int64_t>(cls.size());
  gt.boxes = torch::tensor(boxes).view({g, 4});
  gt.labels = torch::tensor(cls, torch::kInt64);
  gt.windows = torch::tensor(windows, torch::kInt64).view({g, 4});
  gt.minis = g > 0 ? torch::stack(minis) : torch::zeros({0, side, side});
  return gt;
}

// Instance masks in letterboxed input space for one record.
std::vector<BinaryMask> instance_masks(const DatasetManifest& manifest, const ImageRecord& record,
                                       const DetectorConfig& config, std::vector<Label>& labels) {
  const CropRect crop = effective_crop(config.crop, record.dims());
  const LetterboxTransform lt =
      letterbox_transform({crop.width, crop.height}, config.input_size);
  std::vector<BinaryMask> masks;
  for (const auto* a : manifest.annotations_for(record.image_id)) {
    std::vector<Point> pts;
    for (const Point& p : a->points) {
      const Point local{std::clamp(p.x - crop.x, 0.0, static_cast<double>(crop.width)),
                        std::clamp(p.y - crop.y, 0.0, static_cast<double>(crop.height))};
      const Point q = lt.forward(local);
      pts.push_back({std::clamp(q.x, 0.0, static_cast<double>(config.input_size.width)),
                     std::clamp(q.y, 0.0, static_cast<double>(config.input_size.height))});
    }
    masks.push_back(rasterize_polygon(pts, config.input_size));
    labels.push_back(a->label);
  }
  return masks;
}

BinaryMask flip_horizontal(const BinaryMask& m) {
  cv::Mat flipped;
  cv::flip(m.to_mat(), flipped, 1);
  return BinaryMask::from_mat(flipped);
}

// Samples each RoI's assigned mini-mask on an M x M grid over the RoI, using
// the same nearest-neighbour cell rule as decode_mini_mask.
torch::Tensor mask_targets(const torch::Tensor& rois, const torch::Tensor& gt_index,
                           const GtInstances& gt, int m) {
  const auto side = gt.minis.size(1);
  const auto cells = (torch::arange(m, torch::kFloat32) + 0.5F) / static_cast<float>(m);
  const auto win = gt.windows.index_select(0, gt_index);
  auto axis = [&](int lo, int hi, int wlo, int whi) {
    const auto start = rois.select(1, lo).unsqueeze(1);
    const auto span = rois.select(1, hi).unsqueeze(1) - start;
    const auto pixel = torch::floor(start + cells.unsqueeze(0) * span).to(torch::kInt64);
    const auto origin = win.select(1, wlo).unsqueeze(1);
    const auto extent = (win.select(1, whi) - win.select(1, wlo)).unsqueeze(1);
    const auto d = pixel - origin;
    const auto valid = (d >= 0) & (d < extent);
    const auto cell =
        ((2 * d.clamp_min(0) + 1) * side).div(2 * extent, "floor").clamp(0, side - 1);
    return std::pair{cell, valid};
  };
  const auto [col, valid_x] = axis(0, 2, 0, 2);
  const auto [row, valid_y] = axis(1, 3, 1, 3);
  const auto p = rois.size(0);
  const auto values = gt.minis.index(
      {gt_index.view({p, 1, 1}), row.view({p, m, 1}), col.view({p, 1, m})});
  return values * (valid_y.view({p, m, 1}) & valid_x.view({p, 1, m})).to(torch::kFloat32);
}

torch::Tensor random_subset(const torch::Tensor& idx, std::int64_t keep) {
  if (idx.size(0) <= keep) return idx;
  return idx.index_select(0, torch::randperm(idx.size(0), torch::kInt64).slice(0, 0, keep));
}

struct LossParts {
  torch::Tensor rpn_cls, rpn_box, cls, box, mask;
};

constexpr double kSmoothL1Beta = 1.0 / 9.0;

LossParts image_losses(DetectorNet& net, const DetectorNetImpl::Stage1& s, std::int64_t i,
                       const GtInstances& gt) {
  const auto& cfg = net->config;
  LossParts out;

  // Region proposal targets.
  const auto a_iou = iou_matrix(s.anchors, gt.boxes);
  const auto [a_max, a_arg] = a_iou.max(1);
  auto a_labels = torch::full({s.anchors.size(0)}, -1, torch::kInt64);
  a_labels.masked_fill_(a_max < cfg.rpn_negative_iou, 0);
  const auto best = std::get<0>(a_iou.max(0));
  const auto is_best = ((a_iou == best.unsqueeze(0)) & (best.unsqueeze(0) > 0)).any(1);
  a_labels.masked_fill_(is_best | (a_max >= cfg.rpn_positive_iou), 1);
  const auto pos = random_subset((a_labels == 1).nonzero().squeeze(1),
                                 cfg.rpn_anchors_per_image / 2);
  const auto neg = random_subset((a_labels == 0).nonzero().squeeze(1),
                                 cfg.rpn_anchors_per_image - pos.size(0));
  const auto sel = torch::cat({pos, neg});
  const auto target = torch::cat({torch::ones({pos.size(0)}), torch::zeros({neg.size(0)})});
  out.rpn_cls = torch::binary_cross_entropy_with_logits(s.rpn_logits[i].index_select(0, sel),
                                                        target);
  const auto pos_deltas = s.rpn_deltas[i].index_select(0, pos);
  const auto pos_targets = encode_boxes(s.anchors.index_select(0, pos),
                                        gt.boxes.index_select(0, a_arg.index_select(0, pos)));
  out.rpn_box = at::smooth_l1_loss(pos_deltas, pos_targets, at::Reduction::Sum, kSmoothL1Beta) /
                static_cast<double>(std::max<std::int64_t>(1, sel.size(0)));

  // Second-stage targets over proposals plus the ground truth boxes.
  const auto rois = torch::cat({net->proposals(s, i, cfg.post_nms_proposals_train), gt.boxes});
  const auto r_iou = iou_matrix(rois, gt.boxes);
  const auto [r_max, r_arg] = r_iou.max(1);
  const auto r_pos = random_subset(
      (r_max >= cfg.roi_positive_iou).nonzero().squeeze(1),
      static_cast<std::int64_t>(std::floor(cfg.rois_per_image * cfg.roi_positive_fraction)));
  const auto r_neg = random_subset((r_max < cfg.roi_positive_iou).nonzero().squeeze(1),
                                   cfg.rois_per_image - r_pos.size(0));
  const auto r_sel = torch::cat({r_pos, r_neg});
  const auto npos = r_pos.size(0);
  const auto pos_gt = r_arg.index_select(0, r_pos);
  const auto cls_target =
      torch::cat({gt.labels.index_select(0, pos_gt), torch::zeros({r_neg.size(0)}, torch::kInt64)});
  const auto fmap = s.fmap.slice(0, i, i + 1);
  const auto sel_rois = rois.index_select(0, r_sel);
  const auto [logits, deltas] = net->box_head(fmap, sel_rois);
  out.cls = torch::cross_entropy_loss(logits, cls_target);
  if (npos == 0) {
    out.box = torch::zeros({});
    out.mask = torch::zeros({});
    return out;
  }
  const auto pos_rois = rois.index_select(0, r_pos);
  const auto pos_cls = gt.labels.index_select(0, pos_gt);
  const auto class_deltas = deltas.slice(0, 0, npos)
                                .gather(1, pos_cls.view({npos, 1, 1}).expand({npos, 1, 4}))
                                .squeeze(1);
  out.box = at::smooth_l1_loss(class_deltas,
                               encode_boxes(pos_rois, gt.boxes.index_select(0, pos_gt)),
                               at::Reduction::Sum, kSmoothL1Beta) /
            static_cast<double>(r_sel.size(0));
  const int m = cfg.mask_shape;
  const auto mask_logits = net->mask_head(fmap, pos_rois)
                               .gather(1, pos_cls.view({npos, 1, 1, 1}).expand({npos, 1, m, m}))
                               .squeeze(1);
  out.mask = torch::binary_cross_entropy_with_logits(mask_logits,
                                                     mask_targets(pos_rois, pos_gt, gt, m));
  return out;
}

struct TrainSample {
  const ImageRecord* record = nullptr;
  cv::Mat cached;
  GtInstances gt;
  GtInstances gt_flipped;
};

}  // namespace

}  // namespace detail

TrainingRun train_detector(const DatasetManifest& manifest, const DetectorConfig& config,
                           const TrainOptions& options) {
  config.validate();
  std::vector<detail::TrainSample> samples;
  for (const auto* r : detail::training_records(manifest)) {
    if (manifest.annotations_for(r->image_id).empty()) continue;
    std::vector<Label> labels;
    const auto masks = detail::instance_masks(manifest, *r, config, labels);
    detail::TrainSample s;
    s.record = r;
    s.gt = detail::pack_instances(masks, labels, config.mini_mask_side);
    if (s.gt.boxes.size(0) == 0) continue;
    if (config.horizontal_flip) {
      std::vector<BinaryMask> flipped;
      for (const auto& m : masks) flipped.push_back(detail::flip_horizontal(m));
      s.gt_flipped = detail::pack_instances(flipped, labels, config.mini_mask_side);
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) {
    throw ConfigError("detector training needs at least one annotated training image");
  }

  detail::RunWriter writer(options, "detector", to_json(config), split_fingerprint(manifest));
  detail::seed_torch(options.seed, config.deterministic);
  detail::DetectorNet net(config);
  if (config.init != "random") {
    detail::CheckpointReader init(config.init);
    if (init.meta().kind != "detector") {
      throw ConfigError("init checkpoint " + config.init + " is not a detector");
    }
    init.load_into(*net);
  }

  // Letterboxed inputs are cached when they fit comfortably in memory.
  const double bytes_per_image =
      3.0 * config.input_size.width * static_cast<double>(config.input_size.height);
  const bool cache = bytes_per_image * static_cast<double>(samples.size()) <= 768.0 * (1 << 20);
  auto input_for = [&](detail::TrainSample& s) {
    if (!s.cached.empty()) return s.cached;
    cv::Mat img = detail::preprocess(load_record_image(options.dataset_root, *s.record),
                                     config.crop, config.input_size)
                      .image;
    if (cache) s.cached = img;
    return img;
  };

  torch::optim::SGD optimizer(net->parameters(), torch::optim::SGDOptions(config.learning_rate)
                                                     .momentum(config.momentum)
                                                     .weight_decay(config.weight_decay));
  std::mt19937_64 order_rng(options.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  if (config.epochs == 0) writer.save(*net, 0, config.keep_checkpoints);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net->train();
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum_cls = 0.0, sum_box = 0.0, sum_mask = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<torch::Tensor> xs;
      std::vector<const detail::GtInstances*> gts;
      for (std::size_t k = start; k < end; ++k) {
        auto& s = samples[order[k]];
        auto x = detail::image_to_tensor(input_for(s));
        const bool flip = config.horizontal_flip && coin(order_rng);
        if (flip) x = x.flip({2});
        xs.push_back(x);
        gts.push_back(flip ? &s.gt_flipped : &s.gt);
      }
      const auto s1 = net->stage1(torch::stack(xs));
      torch::Tensor cls = torch::zeros({}), box = torch::zeros({}), mask = torch::zeros({});
      for (std::size_t k = 0; k < gts.size(); ++k) {
        const auto parts = detail::image_losses(net, s1, static_cast<std::int64_t>(k), *gts[k]);
        cls = cls + parts.rpn_cls + parts.cls;
        box = box + parts.rpn_box + parts.box;
        mask = mask + parts.mask;
      }
      const double n = static_cast<double>(gts.size());
      cls = cls / n;
      box = box / n;
      mask = mask / n;
      const auto total = cls + box + mask;
      if (!std::isfinite(total.item<double>())) {
        throw Error("detector training diverged at epoch " + std::to_string(epoch));
      }
      optimizer.zero_grad();
      total.backward();
      if (config.grad_clip_norm > 0.0) {
        torch::nn::utils::clip_grad_norm_(net->parameters(), config.grad_clip_norm);
      }
      optimizer.step();
      sum_cls += cls.item<double>();
      sum_box += box.item<double>();
      sum_mask += mask.item<double>();
      ++steps;
    }
    EpochLoss loss;
    loss.epoch = epoch;
    loss.classification = sum_cls / steps;
    loss.box = sum_box / steps;
    loss.mask = sum_mask / steps;
    loss.total = *loss.classification + *loss.box + *loss.mask;
    writer.record_epoch(loss);
    net->eval();
    writer.save(*net, epoch, config.keep_checkpoints);
  }
  return writer.finish(samples.size());
}

struct Detector::Impl {
  DetectorConfig config;
  std::string run_id;
  detail::DetectorNet net{nullptr};
  std::mutex mu;
};

Detector Detector::load(const fs::path& checkpoint) {
  detail::CheckpointReader reader(checkpoint);
  if (reader.meta().kind != "detector") {
    throw LoadError(checkpoint.string() + " holds a " + reader.meta().kind + ", not a detector");
  }
  auto impl = std::make_shared<Impl>();
  try {
    impl->config = detector_config_from_json(reader.meta().config);
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint config invalid: " + std::string(e.what()));
  }
  impl->run_id = reader.meta().run_id;
  impl->net = detail::DetectorNet(impl->config);
  reader.load_into(*impl->net);
  impl->net->eval();
  Detector d;
  d.impl_ = std::move(impl);
  return d;
}

std::vector<Detection> Detector::detect(const cv::Mat& image, double score_floor) const {
  if (!(score_floor >= 0.0 && score_floor <= 1.0)) {
    throw ContractError("score_floor must lie in [0, 1]");
  }
  const auto& cfg = impl_->config;
  const auto pre = detail::preprocess(image, cfg.crop, cfg.input_size);
  const auto& lt = pre.transform;
  const auto x = detail::image_to_tensor(pre.image).unsqueeze(0);

  torch::Tensor boxes, scores, classes, masks;
  {
    std::lock_guard lock(impl_->mu);
    torch::NoGradGuard no_grad;
    auto& net = impl_->net;
    const auto s1 = net->stage1(x);
    const auto props = net->proposals(s1, 0, cfg.post_nms_proposals_inference);
    if (props.size(0) == 0) return {};
    const auto [logits, deltas] = net->box_head(s1.fmap, props);
    const auto [best, cls] = torch::softmax(logits, 1).max(1);
    const auto keep = ((cls > 0) & (best >= score_floor)).nonzero().squeeze(1);
    if (keep.size(0) == 0) return {};
    const auto k_cls = cls.index_select(0, keep);
    const auto k_deltas =
        deltas.index_select(0, keep).gather(1, k_cls.view({-1, 1, 1}).expand({-1, 1, 4})).squeeze(1);
    auto k_boxes = detail::decode_boxes(props.index_select(0, keep), k_deltas);
    k_boxes = detail::clip_boxes(k_boxes, static_cast<float>(lt.pad_x), static_cast<float>(lt.pad_y),
                                 static_cast<float>(lt.pad_x + lt.scaled_width),
                                 static_cast<float>(lt.pad_y + lt.scaled_height));
    const auto k_scores = best.index_select(0, keep);

    std::vector<torch::Tensor> kept;
    for (std::int64_t c = 1; c < detail::DetectorNetImpl::kClasses; ++c) {
      const auto idx = (k_cls == c).nonzero().squeeze(1);
      if (idx.size(0) == 0) continue;
      kept.push_back(idx.index_select(
          0, detail::nms(k_boxes.index_select(0, idx), k_scores.index_select(0, idx),
                         cfg.detection_nms_iou, cfg.max_detections)));
    }
    auto final_idx = torch::cat(kept);
    const auto order = std::get<1>(k_scores.index_select(0, final_idx).sort(true, 0, true))
                           .slice(0, 0, cfg.max_detections);
    final_idx = final_idx.index_select(0, order);
    boxes = k_boxes.index_select(0, final_idx);
    scores = k_scores.index_select(0, final_idx);
    classes = k_cls.index_select(0, final_idx);
    const int m = cfg.mask_shape;
    const auto n = boxes.size(0);
    masks = torch::sigmoid(net->mask_head(s1.fmap, boxes)
                               .gather(1, classes.view({n, 1, 1, 1}).expand({n, 1, m, m}))
                               .squeeze(1));
  }

  const auto b = boxes.to(torch::kFloat64).contiguous();
  const auto bb = b.accessor<double, 2>();
  const auto sc = scores.to(torch::kFloat64).contiguous();
  const auto cl = classes.contiguous();
  const auto mk = (masks >= cfg.mask_threshold).to(torch::kUInt8).contiguous();
  const int m = cfg.mask_shape;
  std::vector<Detection> out;
  for (std::int64_t k = 0; k < b.size(0); ++k) {
    BBox local = lt.inverse(BBox{bb[k][0], bb[k][1], bb[k][2], bb[k][3]});
    const BBox box{local.x_min + pre.crop.x, local.y_min + pre.crop.y, local.x_max + pre.crop.x,
                   local.y_max + pre.crop.y};
    if (!box.valid()) continue;
    Detection d;
    d.label = detail::class_label(cl[k].item<std::int64_t>());
    d.score = std::clamp(sc[k].item<double>(), 0.0, 1.0);
    d.bbox = box;
    MiniMask mini;
    mini.side = m;
    mini.anchor_bbox = box;
    const auto* bits = mk[k].data_ptr<std::uint8_t>();
    mini.bits.assign(bits, bits + static_cast<std::ptrdiff_t>(m) * m);
    d.mask = std::move(mini);
    out.push_back(std::move(d));
  }
  return out;
}

const DetectorConfig& Detector::config() const { return impl_->config; }
const std::string& Detector::run_id() const { return impl_->run_id; }

}  // namespace leafscan
