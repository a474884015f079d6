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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptseed/backend.hpp"
#include "promptseed/prompts.hpp"
#include "promptseed/raster.hpp"
#include "promptseed/synth.hpp"

namespace promptseed {

/// One training or inference image with its image-level labels and masks.
struct Sample {
  std::string id;
  Image image;
  /// Present foreground classes (registry indices), ascending.
  std::vector<int> present;
  std::vector<MaskEntry> masks;
  std::optional<SeedMap> ground_truth;
};

struct Dataset {
  ClassRegistry registry;
  std::vector<Sample> samples;
};

/// Registry of the synthetic scenes: colour names with a synonym each, plus
/// background classes.
ClassRegistry toy_registry(int num_classes = 3);

Sample sample_from_scene(std::string id, const SyntheticScene& scene);

/// `count` scenes with seeds drawn from `seed`, each holding between
/// `min_objects` and `max_objects` objects.
std::vector<Sample> synth_samples(std::uint64_t seed, int count, const SceneOptions& base = {}, int min_objects = 1,
                                  int max_objects = 2);

// Directory layout:
//   registry.json, index.json ({"scenes": [{"id", "present"}]}),
//   images/<id>.png, masks/<id>.json, gt/<id>.png with gt/<id>.json sidecar.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace promptseed
