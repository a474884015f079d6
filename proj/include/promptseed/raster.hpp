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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace promptseed {

/// Dense H x W binary raster, row-major, one byte per pixel.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(std::size_t(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return bits[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[std::size_t(y) * width + x]; }
  std::size_t pixels() const { return bits.size(); }
  std::size_t area() const;
  bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }
  bool operator==(const BinaryMask&) const = default;
};

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b);
double iou(const BinaryMask& a, const BinaryMask& b);

enum class MaskLevel : int { subpart = 0, part = 1, whole = 2 };

std::string_view to_string(MaskLevel level);
MaskLevel parse_mask_level(std::string_view name);

/// A class-agnostic region proposal as produced by a promptable segmenter.
struct MaskEntry {
  BinaryMask mask;
  MaskLevel level = MaskLevel::whole;
  double confidence = 1.0;
  std::size_t area = 0;

  /// Builds an entry and fills `area`; rejects empty masks and confidences
  /// outside [0, 1].
  static MaskEntry make(BinaryMask mask, MaskLevel level, double confidence);
  bool operator==(const MaskEntry&) const = default;
};

/// Per-pixel labels: 0 is background, k > 0 is foreground registry class k-1.
struct SeedMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  SeedMap() = default;
  SeedMap(int h, int w) : height(h), width(w), labels(std::size_t(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return labels[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[std::size_t(y) * width + x]; }
  bool operator==(const SeedMap&) const = default;
};

/// Seed value used for a foreground registry index.
inline std::uint8_t seed_value(int class_id) { return static_cast<std::uint8_t>(class_id + 1); }

}  // namespace promptseed
