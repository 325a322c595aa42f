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

#include "leafscan/rle.hpp"

#include <string>

#include "leafscan/error.hpp"

namespace leafscan {

namespace {
constexpr const char* kOrder = "column-major";
}

RleMask encode_rle(const BinaryMask& mask) {
  RleMask rle;
  rle.height = mask.height();
  rle.width = mask.width();
  bool current = false;
  std::int64_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const bool bit = mask.at(x, y);
      if (bit != current) {
        rle.counts.push_back(run);
        run = 0;
        current = bit;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask decode_rle(const RleMask& rle) {
  if (rle.height < 0 || rle.width < 0) {
    throw ContractError("RLE size must be non-negative");
  }
  const std::int64_t total = static_cast<std::int64_t>(rle.height) * rle.width;
  std::int64_t covered = 0;
  for (std::int64_t c : rle.counts) {
    if (c < 0) {
      throw ContractError("RLE run lengths must be non-negative");
    }
    covered += c;
  }
  if (covered != total) {
    throw ContractError("RLE runs cover " + std::to_string(covered) + " pixels, expected " +
                        std::to_string(total));
  }
  BinaryMask mask(rle.width, rle.height);
  std::int64_t pos = 0;
  bool value = false;
  for (std::int64_t c : rle.counts) {
    if (value) {
      for (std::int64_t k = pos; k < pos + c; ++k) {
        mask.set(static_cast<int>(k / rle.height), static_cast<int>(k % rle.height));
      }
    }
    pos += c;
    value = !value;
  }
  return mask;
}

nlohmann::json rle_to_json(const RleMask& rle) {
  return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}, {"order", kOrder}};
}

RleMask rle_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ParseError("RLE mask: expected an object");
  }
  const auto size = doc.find("size");
  if (size == doc.end() || !size->is_array() || size->size() != 2 ||
      !(*size)[0].is_number_integer() || !(*size)[1].is_number_integer()) {
    throw ParseError("RLE mask: field 'size' must be [height, width]");
  }
  const auto counts = doc.find("counts");
  if (counts == doc.end() || !counts->is_array()) {
    throw ParseError("RLE mask: field 'counts' must be an array");
  }
  if (const auto order = doc.find("order");
      order != doc.end() && (!order->is_string() || order->get<std::string>() != kOrder)) {
    throw ParseError("RLE mask: field 'order' must be \"column-major\"");
  }
  RleMask rle;
  rle.height = (*size)[0].get<int>();
  rle.width = (*size)[1].get<int>();
  rle.counts.reserve(counts->size());
  for (const auto& c : *counts) {
    if (!c.is_number_integer()) {
      throw ParseError("RLE mask: field 'counts' must hold integers");
    }
    rle.counts.push_back(c.get<std::int64_t>());
  }
  return rle;
}

}  // namespace leafscan
