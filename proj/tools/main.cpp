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

// leafscan: command-line entry point. Every subcommand prints one key=value
// summary line on success. Exit codes: 0 success, 1 failure, 2 usage.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "leafscan/annotation.hpp"
#include "leafscan/error.hpp"
#include "leafscan/evaluation.hpp"
#include "leafscan/models.hpp"
#include "leafscan/service.hpp"
#include "leafscan/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace leafscan {
namespace {

struct Flags {
  std::string manifest;
  std::string root;
  std::int64_t seed = 0;
  double fraction = kDefaultTrainFraction;
  std::string config;
  std::string run_dir;
  std::string predictions;
  std::string out;
  int count = 20;
  double score_threshold = kDefaultScoreThreshold;
  double iou_threshold = kDefaultIouThreshold;
  std::string addr;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

int ingest(const Flags& f) {
  DatasetManifest m = build_manifest(f.root);
  validate_manifest(m);
  const std::string out = f.out.empty() ? f.manifest : f.out;
  save_manifest(m, out);
  int diseased = 0;
  for (const auto& r : m.records) diseased += r.image_label == Label::kDiseased;
  std::cout << "images=" << m.records.size() << " annotations=" << m.annotations.size()
            << " diseased=" << diseased
            << " healthy=" << m.records.size() - static_cast<std::size_t>(diseased)
            << " manifest=" << out << '\n';
  return 0;
}

int split(const Flags& f) {
  const DatasetManifest m = split_dataset(load_manifest(f.manifest), f.seed, f.fraction);
  const std::string out = f.out.empty() ? f.manifest : f.out;
  save_manifest(m, out);
  std::cout << "train=" << m.count(Split::kTrain) << " test=" << m.count(Split::kTest)
            << " seed=" << f.seed << " fingerprint=" << split_fingerprint(m)
            << " manifest=" << out << '\n';
  return 0;
}

void print_run(const TrainingRun& run) {
  std::cout << "run_id=" << run.run_id << " kind=" << run.kind << " seed=" << run.seed
            << " epochs=" << run.loss_trace.size()
            << " images=" << run.train_images;
  if (!run.loss_trace.empty()) {
    std::cout << " initial_loss=" << fmt(run.loss_trace.front().total)
              << " final_loss=" << fmt(run.loss_trace.back().total);
  }
  std::cout << " run_dir=" << run.run_dir.string() << '\n';
}

TrainOptions train_options(const Flags& f) {
  TrainOptions o;
  o.dataset_root = f.root;
  if (!f.run_dir.empty()) o.runs_dir = f.run_dir;
  o.seed = static_cast<std::uint64_t>(f.seed);
  return o;
}

int train_cnn(const Flags& f) {
  const ClassifierConfig cfg =
      f.config.empty() ? ClassifierConfig{} : classifier_config_from_json(read_json_file(f.config));
  print_run(train_classifier(load_manifest(f.manifest), cfg, train_options(f)));
  return 0;
}

int train_det(const Flags& f) {
  const DetectorConfig cfg =
      f.config.empty() ? DetectorConfig{} : detector_config_from_json(read_json_file(f.config));
  print_run(train_detector(load_manifest(f.manifest), cfg, train_options(f)));
  return 0;
}

int evaluate_cmd(const Flags& f) {
  EvaluationOptions opts;
  opts.score_threshold = f.score_threshold;
  opts.iou_threshold = f.iou_threshold;
  const EvaluationReport r = evaluate(load_manifest(f.manifest), load_predictions(f.predictions), opts);
  if (!f.out.empty()) write_json_file(report_to_json(r), f.out);
  const auto& m = r.metrics;
  std::cout << "tp=" << r.counts.tp << " fp=" << r.counts.fp << " fn=" << r.counts.fn
            << " tn=" << r.counts.tn << " accuracy=" << fmt(m.accuracy)
            << " precision=" << fmt(m.precision) << " recall=" << fmt(m.recall)
            << " f1=" << fmt(m.f1)
            << " map_50=" << (m.map_50 ? fmt(*m.map_50) : std::string("none")) << '\n';
  return 0;
}

// Scores the test split (every record when nothing is split) with the
// latest checkpoint of a run directory.
int predict(const Flags& f) {
  const DatasetManifest m = load_manifest(f.manifest);
  const fs::path ckpt = latest_checkpoint(f.run_dir);
  const bool any_test = m.count(Split::kTest) > 0;
  PredictionSet set;
  std::optional<Classifier> classifier;
  std::optional<Detector> detector;
  if (checkpoint_kind(ckpt) == "classifier") {
    classifier = Classifier::load(ckpt);
    set.model_run_id = classifier->run_id();
  } else {
    detector = Detector::load(ckpt);
    set.model_run_id = detector->run_id();
  }
  std::size_t detections = 0;
  for (const auto& rec : m.records) {
    if (any_test && rec.split != Split::kTest) continue;
    const cv::Mat img = load_record_image(f.root, rec);
    ImagePrediction p{rec.image_id, {}, std::nullopt};
    if (classifier) {
      p.classification = classifier->classify(img);
    } else {
      p.detections = detector->detect(img, f.score_threshold);
      detections += p.detections.size();
    }
    set.images.push_back(std::move(p));
  }
  const std::string out = f.out.empty() ? "predictions.json" : f.out;
  write_json_file(predictions_to_json(set, m), out);
  std::cout << "images=" << set.images.size() << " detections=" << detections
            << " model_run_id=" << set.model_run_id << " predictions=" << out << '\n';
  return 0;
}

int synth(const Flags& f) {
  const fs::path out = f.out.empty() ? fs::path("synth") : fs::path(f.out);
  const SynthSummary s = synth_fixtures(f.count, static_cast<std::uint64_t>(f.seed), out);
  std::cout << "images=" << s.images << " diseased=" << s.diseased << " healthy=" << s.healthy
            << " seed_used=" << s.seed_used << " out=" << out.string() << '\n';
  return 0;
}

HttpServer* g_server = nullptr;

int serve(const Flags& f, bool threshold_given) {
  ServiceConfig cfg = ServiceConfig::from_env();
  if (!f.addr.empty()) cfg.addr = f.addr;
  if (threshold_given) cfg.score_threshold = f.score_threshold;
  if (!f.run_dir.empty()) {
    // --run-dir names the run to serve; its parent holds the other runs.
    const fs::path run = fs::absolute(f.run_dir).lexically_normal();
    cfg.runs_dir = run.parent_path();
    cfg.model_run = run.filename().string();
  }
  cfg.validate();
  SubmissionService service(cfg, cfg.runs_dir.empty() ? EngineLoader{}
                                                       : runs_dir_loader(cfg.runs_dir));
  HttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cout << "addr=" << cfg.addr << " storage=" << cfg.storage.string()
            << " model_run_id=" << service.model_run_id().value_or("none") << std::endl;
  server.listen(cfg.addr);
  g_server = nullptr;
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"leafscan: crop leaf disease detection toolkit"};
  app.require_subcommand(1, 1);
  Flags f;

  auto* ingest_cmd = app.add_subcommand("ingest", "Scan a dataset root into a manifest");
  ingest_cmd->add_option("--root", f.root, "Dataset root")->required();
  ingest_cmd->add_option("--out", f.out, "Manifest to write")->required();
  ingest_cmd->add_option("--seed", f.seed, "Unused; accepted for uniformity");

  auto* split_cmd = app.add_subcommand("split", "Stratified train/test split");
  split_cmd->add_option("--manifest", f.manifest)->required();
  split_cmd->add_option("--seed", f.seed);
  split_cmd->add_option("--fraction", f.fraction, "Train fraction in (0, 1)");
  split_cmd->add_option("--out", f.out, "Defaults to rewriting --manifest");

  CLI::App* train[2] = {app.add_subcommand("train-cnn", "Train the image classifier"),
                        app.add_subcommand("train-detector", "Train the instance detector")};
  for (auto* t : train) {
    t->add_option("--manifest", f.manifest)->required();
    t->add_option("--root", f.root, "Dataset root")->required();
    t->add_option("--config", f.config, "JSON config");
    t->add_option("--seed", f.seed);
    t->add_option("--run-dir", f.run_dir, "Parent directory for runs (default runs)");
  }

  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against a manifest");
  eval_cmd->add_option("--manifest", f.manifest)->required();
  eval_cmd->add_option("--predictions", f.predictions)->required();
  eval_cmd->add_option("--out", f.out, "Report JSON");
  eval_cmd->add_option("--score-threshold", f.score_threshold)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--iou-threshold", f.iou_threshold)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--seed", f.seed, "Unused; accepted for uniformity");

  auto* predict_cmd = app.add_subcommand("predict", "Run a trained model over a manifest");
  predict_cmd->add_option("--manifest", f.manifest)->required();
  predict_cmd->add_option("--root", f.root)->required();
  predict_cmd->add_option("--run-dir", f.run_dir, "Run directory")->required();
  predict_cmd->add_option("--out", f.out, "Predictions JSON");
  auto* predict_floor = predict_cmd->add_option("--score-threshold", f.score_threshold,
                                                "Detection score floor (default 0.05)");
  predict_floor->check(CLI::Range(0.0, 1.0));
  predict_cmd->add_option("--seed", f.seed, "Unused; inference is deterministic");

  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic fixtures");
  synth_cmd->add_option("--count", f.count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", f.seed);
  synth_cmd->add_option("--out", f.out, "Output directory (default synth)");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--addr", f.addr, "host:port (default LEAFSCAN_ADDR)");
  serve_cmd->add_option("--run-dir", f.run_dir, "Run to serve");
  auto* serve_threshold = serve_cmd->add_option("--score-threshold", f.score_threshold);
  serve_threshold->check(CLI::Range(0.0, 1.0));
  serve_cmd->add_option("--seed", f.seed, "Unused; accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest_cmd) return ingest(f);
    if (*split_cmd) return split(f);
    if (*train[0]) return train_cnn(f);
    if (*train[1]) return train_det(f);
    if (*eval_cmd) return evaluate_cmd(f);
    if (*predict_cmd) {
      if (predict_floor->count() == 0) f.score_threshold = 0.05;
      return predict(f);
    }
    if (*synth_cmd) return synth(f);
    if (*serve_cmd) return serve(f, serve_threshold->count() > 0);
  } catch (const std::exception& e) {
    std::cerr << "leafscan: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace
}  // namespace leafscan

int main(int argc, char** argv) { return leafscan::run(argc, argv); }
