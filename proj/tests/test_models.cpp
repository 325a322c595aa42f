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

#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "box_ops.hpp"
#include "classifier_net.hpp"
#include "detector_net.hpp"
#include "internal.hpp"
#include "leafscan/error.hpp"
#include "leafscan/models.hpp"
#include "leafscan/synth.hpp"
#include "test_util.hpp"

namespace leafscan {
namespace {

// ---------------------------------------------------------------- config

TEST(DetectorConfig, DefaultsFollowThePublishedSetup) {
  const DetectorConfig c;
  EXPECT_EQ(c.backbone, BackboneKind::kResnet101);
  EXPECT_EQ(c.num_classes, 2);
  EXPECT_EQ(c.input_size, (ImageDims{1024, 1024}));
  EXPECT_EQ(c.mini_mask_side, 56);
  EXPECT_EQ(c.epochs, 60);
  EXPECT_EQ(c.batch_size, 2);
  EXPECT_EQ(c.optimizer, OptimizerKind::kSgdMomentum);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.001);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.init, "random");
  EXPECT_NO_THROW(c.validate());
}

TEST(DetectorConfig, MomentumOutsideUnitIntervalIsRejected) {
  DetectorConfig c;
  c.momentum = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.momentum = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DetectorConfig, OtherInvariants) {
  DetectorConfig c;
  c.num_classes = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.input_size = {1000, 1000};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rpn_negative_iou = 0.8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.optimizer = OptimizerKind::kAdam;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DetectorConfig, JsonRoundTripAndStrictKeys) {
  DetectorConfig c = DetectorConfig::smoke();
  c.crop = CropRect{4, 8, 100, 50};
  c.horizontal_flip = true;
  const auto back = detector_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));

  EXPECT_THROW(detector_config_from_json({{"momentun", 0.9}}), ConfigError);
  EXPECT_THROW(detector_config_from_json({{"momentum", 1.5}}), ConfigError);
  EXPECT_THROW(detector_config_from_json({{"momentum", "high"}}), ConfigError);
  EXPECT_THROW(detector_config_from_json({{"model", "classifier"}}), ConfigError);
  const auto smoke = detector_config_from_json({{"preset", "smoke"}, {"epochs", 5}});
  EXPECT_EQ(smoke.backbone, BackboneKind::kLite);
  EXPECT_EQ(smoke.epochs, 5);
  const auto sized = detector_config_from_json({{"input_size", {512, 512, 3}}});
  EXPECT_EQ(sized.input_size, (ImageDims{512, 512}));
}

TEST(ClassifierConfig, DefaultsAndValidation) {
  ClassifierConfig c;
  EXPECT_EQ(c.conv_blocks, 3);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.optimizer, OptimizerKind::kAdam);
  EXPECT_EQ(c.input_size, (ImageDims{256, 256}));
  EXPECT_NO_THROW(c.validate());
  c.conv_blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.input_size = {4, 4};
  EXPECT_THROW(c.validate(), ConfigError);

  ClassifierConfig d;
  d.batch_size = 0;
  d.crop = CropRect{0, 10, 50, 60};
  EXPECT_EQ(to_json(classifier_config_from_json(to_json(d))), to_json(d));
  EXPECT_THROW(classifier_config_from_json({{"dropout", 0.5}}), ConfigError);
}

TEST(Classify, HalfProbabilityIsDiseased) {
  EXPECT_EQ(label_from_probability(0.5), Label::kDiseased);
  EXPECT_EQ(label_from_probability(std::nextafter(0.5, 0.0)), Label::kHealthy);
  EXPECT_EQ(label_from_probability(0.999), Label::kDiseased);
}

// ---------------------------------------------------------------- box ops

torch::Tensor random_boxes(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> size(1.0, extent / 3);
  std::vector<float> v;
  for (int i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    v.insert(v.end(), {static_cast<float>(x), static_cast<float>(y),
                       static_cast<float>(x + size(rng)), static_cast<float>(y + size(rng))});
  }
  return torch::tensor(v).view({n, 4});
}

BBox to_bbox(const torch::Tensor& t, std::int64_t i) {
  return {t[i][0].item<double>(), t[i][1].item<double>(), t[i][2].item<double>(),
          t[i][3].item<double>()};
}

TEST(BoxOps, IouMatrixAgreesWithScalarBoxIou) {
  std::mt19937_64 rng(11);
  const auto a = random_boxes(rng, 12, 50);
  const auto b = random_boxes(rng, 7, 50);
  const auto m = detail::iou_matrix(a, b);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 7; ++j) {
      EXPECT_NEAR(m[i][j].item<double>(), box_iou(to_bbox(a, i), to_bbox(b, j)), 1e-5);
    }
  }
}

TEST(BoxOps, EncodeDecodeInverse) {
  std::mt19937_64 rng(12);
  const auto ref = random_boxes(rng, 30, 100);
  const auto tgt = random_boxes(rng, 30, 100);
  const auto back = detail::decode_boxes(ref, detail::encode_boxes(ref, tgt));
  EXPECT_TRUE(torch::allclose(back, tgt, 1e-4, 1e-3));
  EXPECT_TRUE(torch::allclose(detail::encode_boxes(ref, ref), torch::zeros({30, 4}), 0, 1e-6));
}

TEST(BoxOps, AnchorsCenteredOnCellsInHeadOrder) {
  const auto a = detail::generate_anchors(3, 4, 8.0, {16.0, 32.0}, {0.5, 1.0, 2.0});
  ASSERT_EQ(a.size(0), 3 * 4 * 6);
  // Row 1, col 2, anchor 4 (size 32, ratio 1).
  const auto box = to_bbox(a, (1 * 4 + 2) * 6 + 4);
  EXPECT_NEAR((box.x_min + box.x_max) / 2, 20.0, 1e-5);
  EXPECT_NEAR((box.y_min + box.y_max) / 2, 12.0, 1e-5);
  EXPECT_NEAR(box.width(), 32.0, 1e-4);
  EXPECT_NEAR(box.height(), 32.0, 1e-4);
  // Ratio is height / width.
  const auto tall = to_bbox(a, 5);
  EXPECT_NEAR(tall.height() / tall.width(), 2.0, 1e-4);
}

// Keeps a box iff no higher-ranked box that is itself kept overlaps it above
// the threshold; ranks are (score desc, index asc).
std::vector<std::int64_t> nms_oracle(const torch::Tensor& boxes, const std::vector<float>& scores,
                                     double thr) {
  const auto n = static_cast<std::int64_t>(scores.size());
  std::vector<std::int64_t> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](auto i, auto j) {
    return scores[i] != scores[j] ? scores[i] > scores[j] : i < j;
  });
  std::vector<std::int64_t> kept;
  for (auto i : rank) {
    bool ok = true;
    for (auto k : kept) ok = ok && box_iou(to_bbox(boxes, i), to_bbox(boxes, k)) <= thr;
    if (ok) kept.push_back(i);
  }
  return kept;
}

TEST(BoxOps, NmsMatchesOracle) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 25;
    const auto boxes = random_boxes(rng, n, 40);
    std::vector<float> scores;
    // Coarse scores force ties.
    for (int i = 0; i < n; ++i) scores.push_back(static_cast<float>(coarse(rng)) / 5.0F);
    const double thr = 0.2 + 0.1 * (trial % 6);
    const auto got = detail::nms(boxes, torch::tensor(scores), thr, 1000);
    const auto want = nms_oracle(boxes, scores, thr);
    ASSERT_EQ(got.size(0), static_cast<std::int64_t>(want.size()));
    for (std::size_t k = 0; k < want.size(); ++k) {
      EXPECT_EQ(got[static_cast<std::int64_t>(k)].item<std::int64_t>(), want[k]);
    }
    const auto capped = detail::nms(boxes, torch::tensor(scores), thr, 2);
    EXPECT_LE(capped.size(0), 2);
  }
}

TEST(RoiAlign, LinearFeatureGivesBinCenterValues) {
  // f(u, v) = 2u - 3v + 1 in feature coordinates (cell k centered at k + 0.5);
  // bilinear sampling of a linear map is exact away from the border, so each
  // bin averages to f at its center.
  const int h = 16, w = 20;
  const double stride = 4.0;
  auto fmap = torch::empty({1, 2, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      fmap[0][0][y][x] = 2.0 * (x + 0.5) - 3.0 * (y + 0.5) + 1.0;
      fmap[0][1][y][x] = 1.0;
    }
  }
  const auto rois = torch::tensor({10.0F, 12.0F, 50.0F, 40.0F, 8.0F, 8.0F, 22.0F, 30.0F}).view({2, 4});
  const int out = 7;
  const auto pooled = detail::roi_align(fmap, rois, out, stride);
  ASSERT_EQ(pooled.sizes(), (std::vector<std::int64_t>{2, 2, out, out}));
  for (int r = 0; r < 2; ++r) {
    const auto b = to_bbox(rois, r);
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < out; ++j) {
        const double u = (b.x_min + (j + 0.5) * b.width() / out) / stride;
        const double v = (b.y_min + (i + 0.5) * b.height() / out) / stride;
        EXPECT_NEAR(pooled[r][0][i][j].item<double>(), 2 * u - 3 * v + 1, 1e-4);
        EXPECT_NEAR(pooled[r][1][i][j].item<double>(), 1.0, 1e-5);
      }
    }
  }
  EXPECT_EQ(detail::roi_align(fmap, torch::zeros({0, 4}), out, stride).size(0), 0);
}

TEST(Backbone, Resnet101ShapesAndDepth) {
  torch::manual_seed(0);
  detail::Backbone net(BackboneKind::kResnet101);
  net->eval();
  torch::NoGradGuard no_grad;
  const auto y = net->forward(torch::randn({1, 3, 64, 96}));
  EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{1, 256, 4, 6}));
  EXPECT_EQ(net->stride, 16.0);
  int bottlenecks = 0;
  for (const auto& m : net->modules(false)) bottlenecks += m->as<detail::BottleneckImpl>() ? 1 : 0;
  EXPECT_EQ(bottlenecks, 3 + 4 + 23);

  detail::Backbone lite(BackboneKind::kLite);
  lite->eval();
  EXPECT_EQ(lite->forward(torch::randn({2, 3, 64, 64})).sizes(),
            (std::vector<std::int64_t>{2, 64, 8, 8}));
}

TEST(DetectorNet, HeadShapes) {
  torch::manual_seed(0);
  DetectorConfig c = DetectorConfig::smoke();
  c.input_size = {128, 128};
  detail::DetectorNet net(c);
  net->eval();
  torch::NoGradGuard no_grad;
  const auto s = net->stage1(torch::randn({2, 3, 128, 128}));
  const std::int64_t cells = 16 * 16 * 9;
  EXPECT_EQ(s.rpn_logits.sizes(), (std::vector<std::int64_t>{2, cells}));
  EXPECT_EQ(s.rpn_deltas.sizes(), (std::vector<std::int64_t>{2, cells, 4}));
  EXPECT_EQ(s.anchors.size(0), cells);
  const auto props = net->proposals(s, 1, 50);
  EXPECT_LE(props.size(0), 50);
  EXPECT_TRUE((props >= 0).all().item<bool>());
  EXPECT_TRUE((props <= 128).all().item<bool>());
  const auto [logits, deltas] = net->box_head(s.fmap.slice(0, 0, 1), props);
  EXPECT_EQ(logits.size(1), 3);
  EXPECT_EQ(deltas.sizes(), (std::vector<std::int64_t>{props.size(0), 3, 4}));
  EXPECT_EQ(net->mask_head(s.fmap.slice(0, 0, 1), props).sizes(),
            (std::vector<std::int64_t>{props.size(0), 3, 28, 28}));
}

// ---------------------------------------------------------------- gradient check

TEST(GradientCheck, DenseHeadMatchesCentralDifferences) {
  ClassifierConfig c;
  c.input_size = {32, 32};
  c.base_channels = 4;
  torch::manual_seed(5);
  detail::ClassifierNet net(c);
  net->to(torch::kFloat64);
  net->eval();
  const auto x = torch::randn({2, 3, 32, 32}, torch::kFloat64);
  const auto y = torch::tensor({0.0, 1.0}, torch::kFloat64);
  const auto feats = net->features(x).detach();
  auto loss = [&] {
    return torch::binary_cross_entropy_with_logits(net->head->forward(feats).squeeze(1), y);
  };
  net->zero_grad();
  loss().backward();
  const auto gw = net->head->weight.grad().clone();
  const auto gb = net->head->bias.grad().clone();

  const auto [cw, cb] = detail::dense_head_gradient(feats, y, net->head);
  EXPECT_TRUE(torch::allclose(cw, gw, 1e-9, 1e-12));
  EXPECT_TRUE(torch::allclose(cb, gb, 1e-9, 1e-12));

  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::int64_t> pick(0, net->head->weight.numel() - 1);
  const double h = 1e-6;
  int checked = 0;
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (int k = 0; k < 25; ++k) {
    const bool bias = k == 24;
    auto flat = bias ? net->head->bias.view({-1}) : net->head->weight.view({-1});
    const std::int64_t idx = bias ? 0 : pick(rng);
    const double orig = flat[idx].item<double>();
    flat[idx] = orig + h;
    const double up = loss().item<double>();
    flat[idx] = orig - h;
    const double down = loss().item<double>();
    flat[idx] = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = bias ? gb[0].item<double>() : gw.view({-1})[idx].item<double>();
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
    ++checked;
  }
  EXPECT_GE(checked, 20);
  EXPECT_LE(worst, 1e-3);
}

// ---------------------------------------------------------------- training runs

struct SmallData {
  SmallData(int count, std::uint64_t seed, const SynthPreset& preset) {
    synth_fixtures(count, seed, dir.path(), preset);
    manifest = build_manifest(dir.path());
  }
  test::TempDir dir;
  DatasetManifest manifest;
};

SmallData& classifier_data() {
  static SmallData d(6, 4, SynthPreset{});
  return d;
}

SmallData& detector_data() {
  static SmallData d(4, 5, SynthPreset::lesion_set());
  return d;
}

ClassifierConfig tiny_classifier() {
  ClassifierConfig c;
  c.input_size = {64, 64};
  c.base_channels = 4;
  c.epochs = 3;
  c.batch_size = 4;
  return c;
}

DetectorConfig tiny_detector() {
  DetectorConfig c = DetectorConfig::smoke();
  c.input_size = {128, 128};
  c.anchor_sizes = {8, 16, 32};
  c.epochs = 2;
  return c;
}

TrainOptions options_for(const SmallData& d, const test::TempDir& runs, std::uint64_t seed,
                         const std::string& id) {
  TrainOptions o;
  o.dataset_root = d.dir.path();
  o.runs_dir = runs.path();
  o.seed = seed;
  o.run_id = id;
  return o;
}

TEST(TrainClassifier, ZeroEpochsGivesEmptyTraceAndLoadableCheckpoint) {
  auto& d = classifier_data();
  test::TempDir runs;
  auto c = tiny_classifier();
  c.epochs = 0;
  const auto run = train_classifier(d.manifest, c, options_for(d, runs, 1, "zero"));
  EXPECT_TRUE(run.loss_trace.empty());
  ASSERT_EQ(run.checkpoints.size(), 1U);
  EXPECT_EQ(run.checkpoints[0].filename(), "epoch_0.pt");
  EXPECT_EQ(run.split_fingerprint, split_fingerprint(d.manifest));
  const auto model = Classifier::load(run.checkpoints[0]);
  const auto p = model.classify(load_record_image(d.dir.path(), d.manifest.records[0]));
  EXPECT_GT(p.probability, 0.0);
  EXPECT_LT(p.probability, 1.0);
  EXPECT_EQ(checkpoint_kind(run.checkpoints[0]), "classifier");
}

TEST(TrainClassifier, RunDirectoryLayout) {
  auto& d = classifier_data();
  test::TempDir runs;
  const auto run = train_classifier(d.manifest, tiny_classifier(), options_for(d, runs, 1, ""));
  EXPECT_EQ(run.run_dir, runs.path() / run.run_id);
  EXPECT_TRUE(std::filesystem::is_regular_file(run.run_dir / "config.json"));
  EXPECT_EQ(latest_checkpoint(run.run_dir), run.checkpoints.back());
  std::ifstream csv(run.run_dir / "loss.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "epoch,loss_total");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(run.loss_trace.size(), 3U);
}

TEST(TrainClassifier, SameSeedGivesIdenticalLossTrace) {
  auto& d = classifier_data();
  test::TempDir runs;
  const auto a = train_classifier(d.manifest, tiny_classifier(), options_for(d, runs, 9, "a"));
  const auto b = train_classifier(d.manifest, tiny_classifier(), options_for(d, runs, 9, "b"));
  ASSERT_EQ(a.loss_trace.size(), b.loss_trace.size());
  for (std::size_t i = 0; i < a.loss_trace.size(); ++i) {
    EXPECT_EQ(a.loss_trace[i].total, b.loss_trace[i].total);
  }
  const auto c = train_classifier(d.manifest, tiny_classifier(), options_for(d, runs, 10, "c"));
  EXPECT_NE(a.loss_trace[0].total, c.loss_trace[0].total);
}

TEST(TrainClassifier, SingleClassSetIsConfigError) {
  auto m = classifier_data().manifest;
  for (auto& r : m.records) r.image_label = Label::kHealthy;
  m.annotations.clear();
  test::TempDir runs;
  EXPECT_THROW(train_classifier(m, tiny_classifier(), options_for(classifier_data(), runs, 1, "x")),
               ConfigError);
}

TEST(Classify, ShapeMismatchAndRangeOnExtremes) {
  auto& d = classifier_data();
  test::TempDir runs;
  const auto run = train_classifier(d.manifest, tiny_classifier(), options_for(d, runs, 1, "r"));
  const auto model = Classifier::load(run.checkpoints.back());
  EXPECT_THROW((void)model.classify_preprocessed(cv::Mat(32, 64, CV_8UC3, cv::Scalar::all(0))),
               ContractError);
  EXPECT_THROW((void)model.classify_preprocessed(cv::Mat(64, 64, CV_8UC1, cv::Scalar::all(0))),
               ContractError);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 8; ++k) {
    cv::Mat img(64, 64, CV_8UC3);
    if (k < 2) {
      img.setTo(cv::Scalar::all(k == 0 ? 0 : 255));
    } else {
      cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(256));
    }
    const auto p = model.classify_preprocessed(img);
    EXPECT_GT(p.probability, 0.0);
    EXPECT_LT(p.probability, 1.0);
    EXPECT_EQ(p.label, label_from_probability(p.probability));
  }
}

TEST(TrainDetector, EmptyAnnotationSetIsConfigError) {
  auto m = detector_data().manifest;
  m.annotations.clear();
  test::TempDir runs;
  EXPECT_THROW(train_detector(m, tiny_detector(), options_for(detector_data(), runs, 1, "x")),
               ConfigError);
  DetectorConfig bad = tiny_detector();
  bad.momentum = 1.5;
  EXPECT_THROW(train_detector(detector_data().manifest, bad,
                              options_for(detector_data(), runs, 1, "y")),
               ConfigError);
}

struct DetectorRuns {
  DetectorRuns()
      : a(train_detector(detector_data().manifest, tiny_detector(),
                         options_for(detector_data(), runs, 3, "a"))),
        b(train_detector(detector_data().manifest, tiny_detector(),
                         options_for(detector_data(), runs, 3, "b"))) {}
  test::TempDir runs;
  TrainingRun a;
  TrainingRun b;
};

DetectorRuns& detector_runs() {
  static DetectorRuns r;
  return r;
}

TEST(TrainDetector, ThreePartLossTraceAndCheckpointPerEpoch) {
  const auto& run = detector_runs().a;
  ASSERT_EQ(run.loss_trace.size(), 2U);
  ASSERT_EQ(run.checkpoints.size(), 2U);
  for (const auto& l : run.loss_trace) {
    ASSERT_TRUE(l.classification && l.box && l.mask);
    EXPECT_NEAR(l.total, *l.classification + *l.box + *l.mask, 1e-9);
  }
  std::ifstream csv(run.run_dir / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,loss_total,loss_class,loss_box,loss_mask");
  EXPECT_EQ(run.train_images, 4U);
  EXPECT_EQ(checkpoint_kind(run.checkpoints.back()), "detector");
}

TEST(TrainDetector, SameSeedGivesIdenticalTracesAndDetections) {
  const auto& r = detector_runs();
  ASSERT_EQ(r.a.loss_trace.size(), r.b.loss_trace.size());
  for (std::size_t i = 0; i < r.a.loss_trace.size(); ++i) {
    EXPECT_EQ(r.a.loss_trace[i].total, r.b.loss_trace[i].total);
    EXPECT_EQ(*r.a.loss_trace[i].mask, *r.b.loss_trace[i].mask);
  }
  const cv::Mat probe =
      load_record_image(detector_data().dir.path(), detector_data().manifest.records[0]);
  const auto da = Detector::load(r.a.checkpoints.back()).detect(probe, 0.0);
  const auto db = Detector::load(r.b.checkpoints.back()).detect(probe, 0.0);
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].score, db[i].score);
    EXPECT_EQ(da[i].bbox, db[i].bbox);
    EXPECT_EQ(std::get<MiniMask>(da[i].mask), std::get<MiniMask>(db[i].mask));
  }
}

// Untrained weights with the background logit pushed down, so random inputs
// yield many detections with arbitrary boxes.
std::filesystem::path eager_checkpoint(const test::TempDir& dir) {
  torch::manual_seed(17);
  const DetectorConfig c = tiny_detector();
  detail::DetectorNet net(c);
  {
    torch::NoGradGuard no_grad;
    net->cls_score->bias.copy_(torch::tensor({-6.0F, 0.0F, 0.5F}));
  }
  const auto path = dir.path() / "eager.pt";
  detail::save_checkpoint(path, *net, {"detector", "eager", 0, "", to_json(c)});
  return path;
}

void fuzz_detector(const Detector& model, std::uint64_t seed, bool expect_output) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(1, 300);
  std::uniform_real_distribution<double> floor_dist(0.0, 1.0);
  std::size_t emitted = 0;
  for (int k = 0; k < 12; ++k) {
    cv::Mat img(side(rng), side(rng), CV_8UC3);
    cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(256));
    const double floor = k < 6 ? 0.0 : floor_dist(rng);
    const auto dets = model.detect(img, floor);
    emitted += dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& d = dets[i];
      EXPECT_TRUE(d.satisfies_invariants());
      EXPECT_GE(d.score, floor);
      EXPECT_GE(d.bbox.x_min, 0.0);
      EXPECT_GE(d.bbox.y_min, 0.0);
      EXPECT_LE(d.bbox.x_max, img.cols);
      EXPECT_LE(d.bbox.y_max, img.rows);
      if (i > 0) EXPECT_GE(dets[i - 1].score, d.score);
      EXPECT_LE(dets.size(), static_cast<std::size_t>(model.config().max_detections));
      const auto& mini = std::get<MiniMask>(d.mask);
      EXPECT_EQ(mini.side, model.config().mask_shape);
      EXPECT_EQ(mini.bits.size(), static_cast<std::size_t>(mini.side * mini.side));
      EXPECT_EQ(mini.anchor_bbox, d.bbox);
    }
  }
  if (expect_output) EXPECT_GT(emitted, 0U);
}

TEST(Detect, FuzzedInputsKeepTheOutputContract) {
  fuzz_detector(Detector::load(detector_runs().a.checkpoints.back()), 21, false);
  test::TempDir dir;
  const auto eager = Detector::load(eager_checkpoint(dir));
  fuzz_detector(eager, 22, true);

  cv::Mat img(100, 200, CV_8UC3, cv::Scalar(40, 140, 60));
  for (const auto& d : eager.detect(img, 1.0)) EXPECT_EQ(d.score, 1.0);
  EXPECT_THROW((void)eager.detect(img, 1.5), ContractError);
  EXPECT_THROW((void)eager.detect(img, -0.1), ContractError);
  EXPECT_THROW((void)eager.detect(cv::Mat(), 0.5), ContractError);
}

TEST(Detect, BoxesMapBackThroughCrop) {
  auto& d = detector_data();
  test::TempDir runs;
  DetectorConfig c = tiny_detector();
  c.epochs = 1;
  c.crop = CropRect{40, 20, 300, 160};
  const auto run = train_detector(d.manifest, c, options_for(d, runs, 2, "crop"));
  const auto model = Detector::load(run.checkpoints.back());
  const auto dets = model.detect(load_record_image(d.dir.path(), d.manifest.records[0]), 0.0);
  for (const auto& det : dets) {
    EXPECT_GE(det.bbox.x_min, 40.0);
    EXPECT_GE(det.bbox.y_min, 20.0);
    EXPECT_LE(det.bbox.x_max, 340.0);
    EXPECT_LE(det.bbox.y_max, 180.0);
  }
}

TEST(TrainDetector, WarmStartFromCheckpoint) {
  auto& d = detector_data();
  test::TempDir runs;
  DetectorConfig c = tiny_detector();
  c.epochs = 0;
  c.init = detector_runs().a.checkpoints.back().string();
  const auto run = train_detector(d.manifest, c, options_for(d, runs, 1, "warm"));
  const cv::Mat probe = load_record_image(d.dir.path(), d.manifest.records[1]);
  const auto warm = Detector::load(run.checkpoints.back()).detect(probe, 0.0);
  const auto src = Detector::load(detector_runs().a.checkpoints.back()).detect(probe, 0.0);
  ASSERT_EQ(warm.size(), src.size());
  for (std::size_t i = 0; i < warm.size(); ++i) EXPECT_EQ(warm[i].score, src[i].score);
}

TEST(Checkpoint, CorruptOrForeignFilesAreLoadErrors) {
  test::TempDir dir;
  EXPECT_THROW(Detector::load(dir.path() / "missing.pt"), LoadError);
  const auto garbage = dir.path() / "garbage.pt";
  std::ofstream(garbage) << "not a checkpoint at all";
  EXPECT_THROW(Detector::load(garbage), LoadError);
  EXPECT_THROW(Classifier::load(garbage), LoadError);

  // Truncated copy of a real checkpoint.
  const auto& good = detector_runs().a.checkpoints.back();
  const auto truncated = dir.path() / "truncated.pt";
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(Detector::load(truncated), LoadError);
  EXPECT_THROW(Classifier::load(good), LoadError);
  EXPECT_THROW((void)latest_checkpoint(dir.path()), LoadError);
}

}  // namespace
}  // namespace leafscan
