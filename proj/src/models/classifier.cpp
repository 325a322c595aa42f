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
#include <mutex>
#include <numeric>
#include <random>

#include "classifier_net.hpp"
#include "internal.hpp"
#include "leafscan/error.hpp"

namespace leafscan {

namespace detail {

ClassifierNetImpl::ClassifierNetImpl(const ClassifierConfig& config) {
  blocks = register_module("blocks", torch::nn::Sequential());
  int in = 3;
  int out = config.base_channels;
  int h = config.input_size.height;
  int w = config.input_size.width;
  for (int b = 0; b < config.conv_blocks; ++b) {
    blocks->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
    blocks->push_back(torch::nn::BatchNorm2d(out));
    blocks->push_back(torch::nn::ReLU());
    blocks->push_back(torch::nn::MaxPool2d(2));
    in = out;
    out *= 2;
    h /= 2;
    w /= 2;
  }
  feature_dim = static_cast<std::int64_t>(in) * h * w;
  head = register_module("head", torch::nn::Linear(feature_dim, 1));
}

torch::Tensor ClassifierNetImpl::features(const torch::Tensor& x) {
  return blocks->forward(x).flatten(1);
}

torch::Tensor ClassifierNetImpl::forward(const torch::Tensor& x) {
  return head->forward(features(x)).squeeze(1);
}

std::pair<torch::Tensor, torch::Tensor> dense_head_gradient(const torch::Tensor& features,
                                                            const torch::Tensor& labels,
                                                            const torch::nn::Linear& head) {
  torch::NoGradGuard no_grad;
  const auto z = torch::matmul(features, head->weight.t()).squeeze(1) + head->bias;
  const auto residual = (torch::sigmoid(z) - labels) / static_cast<double>(features.size(0));
  return {torch::matmul(residual.unsqueeze(0), features), residual.sum().unsqueeze(0)};
}

namespace {

// Re-estimates batch-norm statistics with a cumulative average over the
// training set so eval-mode inference sees the final weights' statistics.
void recalibrate_batch_norm(ClassifierNet& net, const std::vector<torch::Tensor>& batches) {
  std::vector<torch::nn::BatchNorm2dImpl*> norms;
  for (auto& m : net->modules(false)) {
    if (auto* bn = m->as<torch::nn::BatchNorm2dImpl>()) norms.push_back(bn);
  }
  for (auto* bn : norms) {
    bn->reset_running_stats();
    bn->options.momentum(std::nullopt);
  }
  net->train();
  {
    torch::NoGradGuard no_grad;
    for (const auto& b : batches) net->forward(b);
  }
  for (auto* bn : norms) bn->options.momentum(0.1);
}

}  // namespace

}  // namespace detail

TrainingRun train_classifier(const DatasetManifest& manifest, const ClassifierConfig& config,
                             const TrainOptions& options) {
  config.validate();
  const auto records = detail::training_records(manifest);
  std::size_t diseased = 0;
  for (const auto* r : records) diseased += r->image_label == Label::kDiseased ? 1 : 0;
  if (records.empty() || diseased == 0 || diseased == records.size()) {
    throw ConfigError("classifier training set must contain both classes");
  }

  detail::RunWriter writer(options, "classifier", to_json(config), split_fingerprint(manifest));
  detail::seed_torch(options.seed, config.deterministic);

  std::vector<torch::Tensor> images;
  std::vector<float> labels;
  for (const auto* r : records) {
    const cv::Mat raw = load_record_image(options.dataset_root, *r);
    images.push_back(
        detail::image_to_tensor(detail::preprocess(raw, config.crop, config.input_size).image));
    labels.push_back(r->image_label == Label::kDiseased ? 1.0F : 0.0F);
  }
  const auto n = images.size();
  const std::size_t batch =
      config.batch_size == 0 ? n : std::min(n, static_cast<std::size_t>(config.batch_size));

  detail::ClassifierNet net(config);
  torch::optim::Adam optimizer(net->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 order_rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net->train();
    if (batch < n) std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<torch::Tensor> xs;
      std::vector<float> ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(images[order[i]]);
        ys.push_back(labels[order[i]]);
      }
      const auto x = torch::stack(xs);
      const auto y = torch::tensor(ys);
      optimizer.zero_grad();
      const auto loss = torch::binary_cross_entropy_with_logits(net->forward(x), y);
      loss.backward();
      optimizer.step();
      sum += loss.item<double>() * static_cast<double>(end - start);
    }
    writer.record_epoch({epoch, sum / static_cast<double>(n), {}, {}, {}});
  }

  if (config.epochs > 0) {
    std::vector<torch::Tensor> batches;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      batches.push_back(torch::stack(
          std::vector<torch::Tensor>(images.begin() + static_cast<std::ptrdiff_t>(start),
                                     images.begin() + static_cast<std::ptrdiff_t>(end))));
    }
    detail::recalibrate_batch_norm(net, batches);
  }
  net->eval();
  writer.save(*net, config.epochs);
  return writer.finish(n);
}

struct Classifier::Impl {
  ClassifierConfig config;
  std::string run_id;
  detail::ClassifierNet net{nullptr};
  std::mutex mu;
};

Classifier Classifier::load(const std::filesystem::path& checkpoint) {
  detail::CheckpointReader reader(checkpoint);
  if (reader.meta().kind != "classifier") {
    throw LoadError(checkpoint.string() + " holds a " + reader.meta().kind +
                    ", not a classifier");
  }
  auto impl = std::make_shared<Impl>();
  try {
    impl->config = classifier_config_from_json(reader.meta().config);
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint config invalid: " + std::string(e.what()));
  }
  impl->run_id = reader.meta().run_id;
  impl->net = detail::ClassifierNet(impl->config);
  reader.load_into(*impl->net);
  impl->net->eval();
  Classifier c;
  c.impl_ = std::move(impl);
  return c;
}

Classification Classifier::classify(const cv::Mat& image) const {
  return classify_preprocessed(
      detail::preprocess(image, impl_->config.crop, impl_->config.input_size).image);
}

Classification Classifier::classify_preprocessed(const cv::Mat& image) const {
  const auto& size = impl_->config.input_size;
  if (image.type() != CV_8UC3 || image.cols != size.width || image.rows != size.height) {
    throw ContractError("classifier expects a " + std::to_string(size.width) + "x" +
                        std::to_string(size.height) + " BGR image");
  }
  const auto x = detail::image_to_tensor(image).unsqueeze(0);
  double logit = 0.0;
  {
    std::lock_guard lock(impl_->mu);
    torch::NoGradGuard no_grad;
    logit = impl_->net->forward(x).item<double>();
  }
  // Computed in double and kept off the endpoints so the result stays in (0, 1).
  double p = 1.0 / (1.0 + std::exp(-logit));
  p = std::clamp(p, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
  return {label_from_probability(p), p};
}

const ClassifierConfig& Classifier::config() const { return impl_->config; }
const std::string& Classifier::run_id() const { return impl_->run_id; }

}  // namespace leafscan
