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
#include <string>

namespace leafscan {

/// Versioned generator parameters; acceptance numbers are pinned to a preset.
struct SynthPreset {
  std::string version = "synth-v1";
  int width = 384;
  int height = 192;
  double lesion_probability = 0.5;
  int min_lesions = 1;
  int max_lesions = 3;
  double min_semi_axis = 9.0;
  double max_semi_axis = 24.0;
  int polygon_vertices = 16;
  /// Axis-aligned rectangular lesions on integer corners (mask == bbox),
  /// written as LabelMe rectangles.
  bool rectangles = false;

  /// Every image carries 1-3 lesions.
  static SynthPreset lesion_set();
  /// lesion_set() with rectangular lesions.
  static SynthPreset rectangle_set();
};

struct SynthSummary {
  int images = 0;
  int diseased = 0;
  int healthy = 0;
  /// Seed that produced the data; differs from the requested seed when the
  /// requested one gave a single-class set and the generator moved on.
  std::uint64_t seed_used = 0;
};

/// Writes <out_dir>/images/synth_NNNN.png and a LabelMe document per image in
/// <out_dir>/annotations/. Byte-identical for a fixed (count, seed, preset).
/// When count >= 2, 0 < lesion_probability < 1 and every image lands in one
/// class, the whole set is regenerated with seed + 1, seed + 2, ... until both
/// classes appear.
SynthSummary synth_fixtures(int count, std::uint64_t seed, const std::filesystem::path& out_dir,
                            const SynthPreset& preset = {});

}  // namespace leafscan
