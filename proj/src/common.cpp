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

#include "leafscan/common.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "leafscan/error.hpp"

namespace leafscan {

Label parse_label(std::string_view text) {
  auto begin = text.begin();
  auto end = text.end();
  while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) --end;
  std::string folded(begin, end);
  std::transform(folded.begin(), folded.end(), folded.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (folded == "healthy") return Label::kHealthy;
  if (folded == "diseased") return Label::kDiseased;
  throw LabelError("unknown label '" + std::string(text) +
                   "'; accepted labels: healthy, diseased");
}

std::string_view to_string(Label label) {
  return label == Label::kDiseased ? "diseased" : "healthy";
}

}  // namespace leafscan
