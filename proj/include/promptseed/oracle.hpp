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

#include <cstdint>
#include <vector>

#include "promptseed/cam.hpp"
#include "promptseed/raster.hpp"

namespace promptseed {

/// Activation maps made from ground truth: the indicator of each class plus
/// Gaussian noise of standard deviation `noise`, clipped to [0, 1].
CamStack oracle_cams(const std::vector<BinaryMask>& class_masks, const std::vector<int>& class_ids, double noise,
                     std::uint64_t seed);
/// One map per class in `classes`, taken from the seed-value regions of
/// `ground_truth`.
CamStack oracle_cams(const SeedMap& ground_truth, const std::vector<int>& classes, double noise,
                     std::uint64_t seed);

/// Expected mean absolute deviation of an oracle map from its indicator.
double oracle_expected_deviation(double noise);

}  // namespace promptseed
