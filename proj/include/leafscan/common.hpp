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
#include <string>
#include <string_view>

namespace leafscan {

enum class Label : std::uint8_t { kHealthy = 0, kDiseased = 1 };

/// Case-folds and trims `text`, then matches it against the accepted labels.
/// Throws LabelError listing the accepted labels otherwise.
Label parse_label(std::string_view text);
std::string_view to_string(Label label);

struct ImageDims {
  int width = 0;
  int height = 0;

  [[nodiscard]] bool valid() const { return width > 0 && height > 0; }
  [[nodiscard]] std::int64_t area() const {
    return static_cast<std::int64_t>(width) * height;
  }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

}  // namespace leafscan
