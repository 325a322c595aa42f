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

#include <torch/torch.h>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "leafscan/models.hpp"

namespace leafscan::detail {

/// BGR uint8 image -> [3, H, W] float, RGB, ImageNet mean/std normalized.
torch::Tensor image_to_tensor(const cv::Mat& bgr);

/// Effective crop window inside an image of `dims` (whole image without crop).
CropRect effective_crop(const std::optional<CropRect>& crop, ImageDims dims);

struct Preprocessed {
  cv::Mat image;  // BGR at target size
  CropRect crop;
  LetterboxTransform transform;  // cropped image -> target
};
Preprocessed preprocess(const cv::Mat& image, const std::optional<CropRect>& crop,
                        ImageDims target);

/// Seeds torch and toggles deterministic kernels.
void seed_torch(std::uint64_t seed, bool deterministic);

/// Training records: train split, or every record when nothing is assigned.
std::vector<const ImageRecord*> training_records(const DatasetManifest& manifest);

struct CheckpointMeta {
  std::string kind;
  std::string run_id;
  int epoch = 0;
  std::string split_fingerprint;
  nlohmann::json config;
};

void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& module,
                     const CheckpointMeta& meta);

/// Holds an opened archive so metadata can be read before building the net.
class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);
  [[nodiscard]] const CheckpointMeta& meta() const { return meta_; }
  /// Copies every parameter and buffer into `module`; LoadError on a missing
  /// key or shape mismatch.
  void load_into(torch::nn::Module& module);

 private:
  std::filesystem::path path_;
  torch::serialize::InputArchive archive_;
  CheckpointMeta meta_;
};

/// Creates runs/<run_id>/ with config.json and a fresh loss.csv header.
class RunWriter {
 public:
  RunWriter(const TrainOptions& options, std::string kind, nlohmann::json config,
            std::string fingerprint);
  [[nodiscard]] const std::string& run_id() const { return run_.run_id; }
  [[nodiscard]] std::filesystem::path checkpoint_path(int epoch) const;

  void record_epoch(const EpochLoss& loss);
  /// Saves checkpoints/epoch_<n>.pt and prunes to the newest `keep` (0 = all).
  void save(const torch::nn::Module& module, int epoch, int keep = 0);
  TrainingRun finish(std::size_t train_images);

 private:
  TrainingRun run_;
  std::function<void(const EpochLoss&)> on_epoch_;
};

}  // namespace leafscan::detail
