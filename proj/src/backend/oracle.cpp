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

#include "promptseed/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "promptseed/errors.hpp"

namespace promptseed {

CamStack oracle_cams(const std::vector<BinaryMask>& class_masks, const std::vector<int>& class_ids, double noise,
                     std::uint64_t seed) {
  if (class_masks.size() != class_ids.size()) throw DimensionError("oracle_cams: one class id per mask required");
  if (!(noise >= 0.0)) throw DomainError("oracle_cams: noise must be nonnegative");
  CamStack out;
  out.class_ids = class_ids;
  if (class_masks.empty()) return out;
  out.height = class_masks.front().height;
  out.width = class_masks.front().width;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& mask : class_masks) {
    if (mask.height != out.height || mask.width != out.width) {
      throw DimensionError("oracle_cams: masks differ in shape");
    }
    Eigen::MatrixXd m(out.height, out.width);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const double base = mask.at(y, x) ? 1.0 : 0.0;
        m(y, x) = noise > 0.0 ? std::clamp(base + noise * normal(rng), 0.0, 1.0) : base;
      }
    out.maps.push_back(std::move(m));
  }
  return out;
}

CamStack oracle_cams(const SeedMap& ground_truth, const std::vector<int>& classes, double noise,
                     std::uint64_t seed) {
  std::vector<BinaryMask> masks;
  for (int c : classes) {
    BinaryMask m(ground_truth.height, ground_truth.width);
    const auto value = seed_value(c);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = ground_truth.labels[i] == value ? 1 : 0;
    masks.push_back(std::move(m));
  }
  CamStack out = oracle_cams(masks, classes, noise, seed);
  out.height = ground_truth.height;
  out.width = ground_truth.width;
  return out;
}

double oracle_expected_deviation(double noise) {
  if (noise <= 0.0) return 0.0;
  // Only the half of the noise pointing away from the clip contributes:
  // E[min(noise * max(Z, 0), 1)] for standard normal Z.
  const double inv = 1.0 / noise;
  const double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double phi = phi0 * std::exp(-0.5 * inv * inv);
  const double tail = 0.5 * std::erfc(inv / std::numbers::sqrt2);
  return noise * (phi0 - phi) + tail;
}

}  // namespace promptseed
