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

#include "promptseed/raster.hpp"

#include "promptseed/errors.hpp"

namespace promptseed {

std::size_t BinaryMask::area() const {
  std::size_t n = 0;
  for (std::uint8_t b : bits) n += b != 0;
  return n;
}

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw DimensionError("mask shapes differ");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] != 0) & (b.bits[i] != 0);
  return n;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string_view to_string(MaskLevel level) {
  switch (level) {
    case MaskLevel::whole: return "whole";
    case MaskLevel::part: return "part";
    case MaskLevel::subpart: return "subpart";
  }
  return "unknown";
}

MaskLevel parse_mask_level(std::string_view name) {
  if (name == "whole") return MaskLevel::whole;
  if (name == "part") return MaskLevel::part;
  if (name == "subpart") return MaskLevel::subpart;
  throw DomainError("unknown mask level '" + std::string(name) + "'");
}

MaskEntry MaskEntry::make(BinaryMask mask, MaskLevel level, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw DomainError("mask confidence must lie in [0, 1]");
  }
  MaskEntry e;
  e.area = mask.area();
  if (e.area == 0) throw DomainError("mask has zero area");
  e.mask = std::move(mask);
  e.level = level;
  e.confidence = confidence;
  return e;
}

}  // namespace promptseed
