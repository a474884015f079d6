// Copyright 2026 The promptseed Authors.
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

#include <array>
#include <cstdint>
#include <vector>

#include "promptseed/backend.hpp"
#include "promptseed/raster.hpp"

namespace promptseed {

enum class ShapeKind { rectangle, ellipse };

struct SceneOptions {
  std::uint64_t seed = 0;
  int n_objects = 2;
  int height = 128;
  int width = 128;
  /// Object classes are drawn from registry indices [0, num_classes).
  int num_classes = 3;
  /// Parts per object, 2 or 3; 0 picks one of the two at random per object.
  int part_split = 0;
  bool subparts = true;
  /// Confidences are 1 - noise * U(0, 1). Whole masks use min(noise, 0.25).
  double confidence_noise = 0.1;
  /// Also emit whole-level masks covering the background, one per image
  /// quadrant minus the objects.
  bool background_masks = true;
  /// Placement attempts per object before giving up.
  int max_retries = 500;
  /// Standard deviation of the per-pixel colour noise.
  double pixel_noise = 0.03;
};

struct SceneObject {
  int class_id = 0;
  ShapeKind shape = ShapeKind::rectangle;
  int top = 0, left = 0, bottom = 0, right = 0;  // half-open box
  BinaryMask support;
};

struct SyntheticScene {
  Image image;
  SeedMap ground_truth;
  std::vector<MaskEntry> masks;
  /// Object index for each mask, -1 for background-region masks.
  std::vector<int> mask_object;
  std::vector<SceneObject> objects;
  /// Registry indices of the classes present, ascending.
  std::vector<int> present;
};

/// Fill colour of a class.
std::array<double, 3> class_color(int class_id);

SyntheticScene synth_scene(const SceneOptions& options);

}  // namespace promptseed
