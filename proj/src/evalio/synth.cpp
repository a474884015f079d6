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

#include "promptseed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{
    {0.90, 0.20, 0.20},
    {0.20, 0.85, 0.25},
    {0.20, 0.30, 0.90},
    {0.90, 0.85, 0.20},
    {0.80, 0.30, 0.85},
    {0.20, 0.85, 0.85},
}};
constexpr std::array<double, 3> kBackgroundColor{0.45, 0.45, 0.45};
constexpr int kMargin = 4;

BinaryMask rasterize(const SceneObject& obj, int height, int width) {
  BinaryMask m(height, width);
  const double cy = 0.5 * (obj.top + obj.bottom - 1);
  const double cx = 0.5 * (obj.left + obj.right - 1);
  const double ry = 0.5 * (obj.bottom - obj.top);
  const double rx = 0.5 * (obj.right - obj.left);
  for (int y = obj.top; y < obj.bottom; ++y)
    for (int x = obj.left; x < obj.right; ++x) {
      if (obj.shape == ShapeKind::ellipse) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        if (dy * dy + dx * dx > 1.0) continue;
      }
      m.at(y, x) = 1;
    }
  return m;
}

bool boxes_overlap(const SceneObject& a, const SceneObject& b) {
  return a.top < b.bottom + kMargin && b.top < a.bottom + kMargin && a.left < b.right + kMargin &&
         b.left < a.right + kMargin;
}

/// Splits `mask` into `k` strips along rows (or columns) between [lo, hi).
std::vector<BinaryMask> split_mask(const BinaryMask& mask, int k, bool along_rows, int lo, int hi,
                                   std::mt19937_64& rng) {
  std::vector<int> cuts{lo};
  const double step = static_cast<double>(hi - lo) / k;
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  for (int i = 1; i < k; ++i) cuts.push_back(lo + static_cast<int>(std::lround(step * (i + jitter(rng)))));
  cuts.push_back(hi);
  std::vector<BinaryMask> out;
  for (int i = 0; i < k; ++i) {
    BinaryMask part(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x) {
        const int coord = along_rows ? y : x;
        if (mask.at(y, x) && coord >= cuts[i] && coord < cuts[i + 1]) part.at(y, x) = 1;
      }
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace

std::array<double, 3> class_color(int class_id) {
  if (class_id >= 0 && class_id < static_cast<int>(kPalette.size())) return kPalette[class_id];
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(class_id));
  std::uniform_real_distribution<double> u(0.1, 0.95);
  return {u(rng), u(rng), u(rng)};
}

SyntheticScene synth_scene(const SceneOptions& options) {
  if (options.n_objects < 0) throw DomainError("synth_scene: n_objects must be nonnegative");
  if (options.height < 16 || options.width < 16) throw DimensionError("synth_scene: grid must be at least 16x16");
  if (options.num_classes < 1 || options.num_classes > 255) {
    throw DomainError("synth_scene: num_classes must be in [1, 255]");
  }
  if (options.part_split != 0 && options.part_split != 2 && options.part_split != 3) {
    throw DomainError("synth_scene: part_split must be 0, 2 or 3");
  }
  if (options.confidence_noise < 0.0 || options.confidence_noise > 1.0) {
    throw DomainError("synth_scene: confidence_noise must be in [0, 1]");
  }
  const int H = options.height, W = options.width;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SyntheticScene scene;
  const int short_side = std::min(H, W);
  const int per_row = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(std::max(1, options.n_objects)))));
  const int max_side = options.n_objects <= 2 ? short_side / 2 : short_side / (per_row + 1);
  const int min_side = std::max(4, std::min(short_side / 4, max_side));
  if (options.n_objects > 0 && max_side < min_side) {
    throw DomainError("synth_scene: " + std::to_string(options.n_objects) + " objects do not fit a " +
                      std::to_string(H) + "x" + std::to_string(W) + " grid");
  }
  std::vector<int> classes(static_cast<std::size_t>(options.n_objects));
  std::vector<ShapeKind> shapes(classes.size());
  for (std::size_t n = 0; n < classes.size(); ++n) {
    classes[n] = uniform_int(0, options.num_classes - 1);
    shapes[n] = unit(rng) < 0.5 ? ShapeKind::rectangle : ShapeKind::ellipse;
  }
  // A layout that paints itself into a corner is restarted from scratch.
  constexpr int kLayouts = 20;
  for (int layout = 0; layout < kLayouts; ++layout) {
    scene.objects.clear();
    bool ok = true;
    for (std::size_t n = 0; n < classes.size() && ok; ++n) {
      SceneObject obj;
      obj.class_id = classes[n];
      obj.shape = shapes[n];
      bool placed = false;
      for (int attempt = 0; attempt < options.max_retries && !placed; ++attempt) {
        const int h = uniform_int(min_side, max_side);
        const int w = uniform_int(min_side, max_side);
        obj.top = uniform_int(0, H - h);
        obj.left = uniform_int(0, W - w);
        obj.bottom = obj.top + h;
        obj.right = obj.left + w;
        placed = std::none_of(scene.objects.begin(), scene.objects.end(),
                              [&](const SceneObject& o) { return boxes_overlap(o, obj); });
      }
      if (placed) {
        scene.objects.push_back(std::move(obj));
      } else {
        ok = false;
      }
    }
    if (ok) break;
    if (layout + 1 == kLayouts) {
      throw DomainError("synth_scene: could not place " + std::to_string(options.n_objects) +
                        " objects without overlap after " + std::to_string(kLayouts) + " layouts of " +
                        std::to_string(options.max_retries) + " attempts per object");
    }
  }
  for (auto& obj : scene.objects) obj.support = rasterize(obj, H, W);

  scene.ground_truth = SeedMap(H, W);
  for (const auto& obj : scene.objects)
    for (int y = obj.top; y < obj.bottom; ++y)
      for (int x = obj.left; x < obj.right; ++x)
        if (obj.support.at(y, x)) scene.ground_truth.at(y, x) = seed_value(obj.class_id);

  std::normal_distribution<double> noise(0.0, options.pixel_noise);
  scene.image = Image(H, W, 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int label = scene.ground_truth.at(y, x);
      const auto color = label == 0 ? kBackgroundColor : class_color(label - 1);
      for (int c = 0; c < 3; ++c) scene.image.at(y, x, c) = std::clamp(color[c] + noise(rng), 0.0, 1.0);
    }

  const double whole_noise = std::min(options.confidence_noise, 0.25);
  auto confidence = [&](double amount) { return 1.0 - amount * unit(rng); };
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& obj = scene.objects[i];
    const int oi = static_cast<int>(i);
    scene.masks.push_back(MaskEntry::make(obj.support, MaskLevel::whole, confidence(whole_noise)));
    scene.mask_object.push_back(oi);
    const int k = options.part_split == 0 ? uniform_int(2, 3) : options.part_split;
    const bool rows = (obj.bottom - obj.top) >= (obj.right - obj.left);
    auto parts = rows ? split_mask(obj.support, k, true, obj.top, obj.bottom, rng)
                      : split_mask(obj.support, k, false, obj.left, obj.right, rng);
    for (auto& part : parts) {
      if (part.area() == 0) continue;
      if (options.subparts) {
        int lo = rows ? obj.right : obj.bottom, hi = -1;
        for (int y = obj.top; y < obj.bottom; ++y)
          for (int x = obj.left; x < obj.right; ++x)
            if (part.at(y, x)) {
              lo = std::min(lo, rows ? x : y);
              hi = std::max(hi, (rows ? x : y) + 1);
            }
        auto halves = split_mask(part, 2, !rows, lo, hi, rng);
        if (halves[0].area() > 0 && halves[1].area() > 0) {
          for (auto& half : halves) {
            scene.masks.push_back(MaskEntry::make(std::move(half), MaskLevel::subpart,
                                                  confidence(options.confidence_noise)));
            scene.mask_object.push_back(oi);
          }
        }
      }
      scene.masks.push_back(MaskEntry::make(std::move(part), MaskLevel::part, confidence(options.confidence_noise)));
      scene.mask_object.push_back(oi);
    }
  }

  if (options.background_masks && options.n_objects > 0) {
    const int hy = H / 2, hx = W / 2;
    for (int q = 0; q < 4; ++q) {
      const int y0 = q < 2 ? 0 : hy, y1 = q < 2 ? hy : H;
      const int x0 = q % 2 == 0 ? 0 : hx, x1 = q % 2 == 0 ? hx : W;
      BinaryMask region(H, W);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          if (scene.ground_truth.at(y, x) == 0) region.at(y, x) = 1;
      if (region.area() == 0) continue;
      scene.masks.push_back(MaskEntry::make(std::move(region), MaskLevel::whole, confidence(whole_noise)));
      scene.mask_object.push_back(-1);
    }
  }

  for (const auto& obj : scene.objects) scene.present.push_back(obj.class_id);
  std::sort(scene.present.begin(), scene.present.end());
  scene.present.erase(std::unique(scene.present.begin(), scene.present.end()), scene.present.end());
  return scene;
}

}  // namespace promptseed
