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
#include <cstdio>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "internal.hpp"
#include "leafscan/error.hpp"

namespace leafscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

torch::Tensor image_to_tensor(const cv::Mat& bgr) {
  if (bgr.type() != CV_8UC3) {
    throw ContractError("expected an 8-bit 3-channel image");
  }
  cv::Mat contiguous = bgr.isContinuous() ? bgr : bgr.clone();
  auto t = torch::from_blob(contiguous.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8)
               .to(torch::kFloat32)
               .div_(255.0F);
  // BGR -> RGB, HWC -> CHW.
  t = t.flip({2}).permute({2, 0, 1}).contiguous();
  const auto mean = torch::tensor({0.485F, 0.456F, 0.406F}).view({3, 1, 1});
  const auto std = torch::tensor({0.229F, 0.224F, 0.225F}).view({3, 1, 1});
  return (t - mean) / std;
}

CropRect effective_crop(const std::optional<CropRect>& crop, ImageDims dims) {
  if (!crop) return {0, 0, dims.width, dims.height};
  const int x0 = std::clamp(crop->x, 0, dims.width);
  const int y0 = std::clamp(crop->y, 0, dims.height);
  const int x1 = std::clamp(crop->x + crop->width, 0, dims.width);
  const int y1 = std::clamp(crop->y + crop->height, 0, dims.height);
  if (x1 <= x0 || y1 <= y0) {
    throw ContractError("crop does not intersect the image");
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

Preprocessed preprocess(const cv::Mat& image, const std::optional<CropRect>& crop,
                        ImageDims target) {
  if (image.empty()) throw ContractError("empty image");
  cv::Mat bgr = image;
  if (image.type() != CV_8UC3) {
    throw ContractError("expected an 8-bit 3-channel image");
  }
  Preprocessed out;
  out.crop = effective_crop(crop, {image.cols, image.rows});
  const cv::Mat cropped = bgr(cv::Rect(out.crop.x, out.crop.y, out.crop.width, out.crop.height));
  auto lb = resize_letterbox(cropped, target);
  out.image = lb.image;
  out.transform = lb.transform;
  return out;
}

void seed_torch(std::uint64_t seed, bool deterministic) {
  torch::manual_seed(seed);
  at::globalContext().setDeterministicAlgorithms(deterministic, false);
}

std::vector<const ImageRecord*> training_records(const DatasetManifest& manifest) {
  const bool any_split = manifest.count(Split::kTrain) + manifest.count(Split::kTest) > 0;
  std::vector<const ImageRecord*> out;
  for (const auto& r : manifest.records) {
    if (!any_split || r.split == Split::kTrain) out.push_back(&r);
  }
  return out;
}

void save_checkpoint(const fs::path& path, const torch::nn::Module& module,
                     const CheckpointMeta& meta) {
  torch::serialize::OutputArchive archive;
  for (const auto& p : module.named_parameters(true)) {
    archive.write("param/" + p.key(), p.value().detach());
  }
  for (const auto& b : module.named_buffers(true)) {
    archive.write("buffer/" + b.key(), b.value().detach(), true);
  }
  const json doc = {{"format", "leafscan-checkpoint-1"},
                    {"kind", meta.kind},
                    {"run_id", meta.run_id},
                    {"epoch", meta.epoch},
                    {"split_fingerprint", meta.split_fingerprint},
                    {"config", meta.config}};
  archive.write("meta", c10::IValue(doc.dump()));
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  fs::rename(tmp, path);
}

CheckpointReader::CheckpointReader(const fs::path& path) : path_(path) {
  if (!fs::is_regular_file(path)) {
    throw LoadError("checkpoint not found: " + path.string());
  }
  try {
    archive_.load_from(path.string());
    c10::IValue raw;
    if (!archive_.try_read("meta", raw) || !raw.isString()) {
      throw LoadError("not a leafscan checkpoint: " + path.string());
    }
    const json doc = json::parse(raw.toStringRef());
    if (doc.value("format", "") != "leafscan-checkpoint-1") {
      throw LoadError("unsupported checkpoint format in " + path.string());
    }
    meta_.kind = doc.at("kind").get<std::string>();
    meta_.run_id = doc.at("run_id").get<std::string>();
    meta_.epoch = doc.at("epoch").get<int>();
    meta_.split_fingerprint = doc.at("split_fingerprint").get<std::string>();
    meta_.config = doc.at("config");
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

void CheckpointReader::load_into(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor& dst, bool buffer) {
    torch::Tensor src;
    try {
      archive_.read(key, src, buffer);
    } catch (const c10::Error&) {
      throw LoadError("checkpoint " + path_.string() + " lacks '" + key + "'");
    }
    if (src.sizes() != dst.sizes()) {
      throw LoadError("checkpoint " + path_.string() + ": shape mismatch for '" + key + "'");
    }
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) copy("param/" + p.key(), p.value(), false);
  for (auto& b : module.named_buffers(true)) copy("buffer/" + b.key(), b.value(), true);
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RunWriter::RunWriter(const TrainOptions& options, std::string kind, json config,
                     std::string fingerprint)
    : on_epoch_(options.on_epoch) {
  run_.kind = std::move(kind);
  run_.config = std::move(config);
  run_.seed = options.seed;
  run_.split_fingerprint = std::move(fingerprint);
  run_.run_id = options.run_id;
  if (run_.run_id.empty()) {
    const std::string digest = hex64(fnv1a(run_.config.dump() + "|" + run_.split_fingerprint));
    run_.run_id = run_.kind + "-s" + std::to_string(options.seed) + "-" + digest.substr(0, 10);
  }
  if (run_.run_id.find('/') != std::string::npos || run_.run_id == "." || run_.run_id == "..") {
    throw ConfigError("run id must be a plain directory name: " + run_.run_id);
  }
  run_.run_dir = options.runs_dir / run_.run_id;
  std::error_code ec;
  fs::remove_all(run_.run_dir / "checkpoints", ec);
  fs::create_directories(run_.run_dir / "checkpoints", ec);
  if (ec) {
    throw IoError("cannot create run directory " + run_.run_dir.string());
  }
  json snapshot = run_.config;
  snapshot["seed"] = options.seed;
  snapshot["split_fingerprint"] = run_.split_fingerprint;
  std::ofstream(run_.run_dir / "config.json", std::ios::trunc) << snapshot.dump(2) << '\n';
  std::ofstream csv(run_.run_dir / "loss.csv", std::ios::trunc);
  csv << (run_.kind == "detector" ? "epoch,loss_total,loss_class,loss_box,loss_mask"
                                  : "epoch,loss_total")
      << '\n';
  if (!csv) {
    throw IoError("cannot write " + (run_.run_dir / "loss.csv").string());
  }
}

fs::path RunWriter::checkpoint_path(int epoch) const {
  return run_.run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".pt");
}

void RunWriter::record_epoch(const EpochLoss& loss) {
  run_.loss_trace.push_back(loss);
  std::ofstream csv(run_.run_dir / "loss.csv", std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g", loss.epoch, loss.total);
  csv << buf;
  if (loss.classification) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g", *loss.classification,
                  loss.box.value_or(0.0), loss.mask.value_or(0.0));
    csv << buf;
  }
  csv << '\n';
  if (on_epoch_) on_epoch_(loss);
}

void RunWriter::save(const torch::nn::Module& module, int epoch, int keep) {
  const fs::path path = checkpoint_path(epoch);
  save_checkpoint(path, module,
                  {run_.kind, run_.run_id, epoch, run_.split_fingerprint, run_.config});
  run_.checkpoints.push_back(path);
  if (keep > 0) {
    while (run_.checkpoints.size() > static_cast<std::size_t>(keep)) {
      std::error_code ec;
      fs::remove(run_.checkpoints.front(), ec);
      run_.checkpoints.erase(run_.checkpoints.begin());
    }
  }
}

TrainingRun RunWriter::finish(std::size_t train_images) {
  run_.train_images = train_images;
  return run_;
}

}  // namespace detail

std::string checkpoint_kind(const fs::path& checkpoint) {
  return detail::CheckpointReader(checkpoint).meta().kind;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  std::error_code ec;
  int best = -1;
  fs::path best_path;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0 || entry.path().extension() != ".pt") continue;
    try {
      const int n = std::stoi(name.substr(6));
      if (n > best) {
        best = n;
        best_path = entry.path();
      }
    } catch (const std::exception&) {
      // Not a numbered checkpoint; ignore.
    }
  }
  if (best < 0) {
    throw LoadError("no checkpoints under " + dir.string());
  }
  return best_path;
}

cv::Mat load_record_image(const fs::path& root, const ImageRecord& record) {
  const fs::path path = root / record.file_path;
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) {
    throw IoError("cannot decode image " + path.string());
  }
  return img;
}

}  // namespace leafscan
