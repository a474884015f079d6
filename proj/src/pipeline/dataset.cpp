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

#include "promptseed/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "promptseed/codecs.hpp"
#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

struct ColourName {
  const char* name;
  const char* synonym;
};

constexpr ColourName kColourNames[] = {
    {"red", "crimson"},  {"green", "emerald"}, {"blue", "cobalt"},
    {"yellow", "amber"}, {"purple", "violet"}, {"cyan", "teal"},
};

std::vector<std::string> label_names(const ClassRegistry& registry) {
  std::vector<std::string> names;
  for (const auto& f : registry.foreground()) names.push_back(f.name);
  return names;
}

}  // namespace

ClassRegistry toy_registry(int num_classes) {
  std::vector<ForegroundClass> fg;
  for (int c = 0; c < num_classes; ++c) {
    if (c < static_cast<int>(std::size(kColourNames))) {
      fg.push_back({kColourNames[c].name, {kColourNames[c].synonym}});
    } else {
      fg.push_back({"shade" + std::to_string(c), {}});
    }
  }
  return ClassRegistry(std::move(fg), {"ground", "wall", "floor"});
}

Sample sample_from_scene(std::string id, const SyntheticScene& scene) {
  Sample s;
  s.id = std::move(id);
  s.image = scene.image;
  s.present = scene.present;
  s.masks = scene.masks;
  s.ground_truth = scene.ground_truth;
  return s;
}

std::vector<Sample> synth_samples(std::uint64_t seed, int count, const SceneOptions& base, int min_objects,
                                  int max_objects) {
  std::vector<Sample> out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    SceneOptions opt = base;
    opt.seed = rng();
    opt.n_objects = std::uniform_int_distribution<int>(min_objects, max_objects)(rng);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", i);
    out.push_back(sample_from_scene(id, synth_scene(opt)));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  namespace fs = std::filesystem;
  try {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "gt");
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot create dataset directories: ") + e.what());
  }
  write_file(dir / "registry.json", dataset.registry.to_json().dump(2) + "\n");
  nlohmann::json scenes = nlohmann::json::array();
  const auto names = label_names(dataset.registry);
  for (const auto& s : dataset.samples) {
    scenes.push_back({{"id", s.id}, {"present", s.present}});
    write_image_png(dir / "images" / (s.id + ".png"), s.image);
    write_mask_file(dir / "masks" / (s.id + ".json"), MaskFile{s.image.height, s.image.width, s.masks});
    if (s.ground_truth) write_seed_with_sidecar(dir / "gt" / (s.id + ".png"), *s.ground_truth, names);
  }
  write_file(dir / "index.json", nlohmann::json{{"scenes", scenes}}.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  Dataset d{ClassRegistry::load(dir / "registry.json"), {}};
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(dir / "index.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "index.json").string() + ": " + e.what(), 0);
  }
  if (!index.contains("scenes") || !index.at("scenes").is_array()) {
    throw FormatError((dir / "index.json").string() + ": missing 'scenes' array", 0);
  }
  for (const auto& entry : index.at("scenes")) {
    Sample s;
    try {
      s.id = entry.at("id").get<std::string>();
      s.present = entry.at("present").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "index.json").string() + ": bad scene entry: " + e.what(), 0);
    }
    std::sort(s.present.begin(), s.present.end());
    for (int c : s.present) {
      if (c < 0 || c >= d.registry.num_foreground()) {
        throw DomainError(s.id + ": present class " + std::to_string(c) + " is not a foreground class");
      }
    }
    s.image = read_image_png(dir / "images" / (s.id + ".png"));
    const fs::path masks = dir / "masks" / (s.id + ".json");
    if (fs::exists(masks)) {
      MaskFile mf = read_mask_file(masks);
      if (mf.height != s.image.height || mf.width != s.image.width) {
        throw DimensionError(masks.string() + ": mask size differs from the image");
      }
      s.masks = std::move(mf.masks);
    }
    const fs::path gt = dir / "gt" / (s.id + ".png");
    if (fs::exists(gt)) s.ground_truth = read_seed_png(gt);
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace promptseed
