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
#include <vector>

#include <json.hpp>

#include "leafscan/geometry.hpp"

namespace leafscan {

/// Column-major run-length encoding of a binary mask. Runs alternate between
/// zeros and ones and always start with a (possibly empty) run of zeros.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask encode_rle(const BinaryMask& mask);
/// Throws ContractError when the runs do not cover exactly height * width pixels.
BinaryMask decode_rle(const RleMask& rle);

/// {"size": [h, w], "counts": [...], "order": "column-major"}
nlohmann::json rle_to_json(const RleMask& rle);
/// Throws ParseError on a malformed document.
RleMask rle_from_json(const nlohmann::json& doc);

}  // namespace leafscan
