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

#include <utility>

#include <torch/torch.h>

#include "leafscan/models.hpp"

namespace leafscan::detail {

struct ClassifierNetImpl : torch::nn::Module {
  explicit ClassifierNetImpl(const ClassifierConfig& config);

  /// Flattened conv-stack output, [N, feature_dim].
  torch::Tensor features(const torch::Tensor& x);
  /// Pre-sigmoid logits, [N].
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t feature_dim = 0;
  torch::nn::Sequential blocks{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ClassifierNet);

/// Closed-form gradient of mean binary cross-entropy through the dense head:
/// returns (dL/dW [1, D], dL/db [1]) for features [N, D] and 0/1 labels [N].
std::pair<torch::Tensor, torch::Tensor> dense_head_gradient(const torch::Tensor& features,
                                                            const torch::Tensor& labels,
                                                            const torch::nn::Linear& head);

}  // namespace leafscan::detail
