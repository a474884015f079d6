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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseed/raster.hpp"

namespace promptseed {

/// Label-space confusion counts. Labels run from 0 (background) to
/// num_labels - 1.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_labels);

  void add(const SeedMap& pred, const SeedMap& gt);
  int num_labels() const { return num_labels_; }
  std::uint64_t count(int pred, int gt) const { return counts_[std::size_t(pred) * num_labels_ + gt]; }

 private:
  int num_labels_;
  std::vector<std::uint64_t> counts_;
};

struct IoUReport {
  std::vector<std::uint64_t> true_positive;
  std::vector<std::uint64_t> false_positive;
  std::vector<std::uint64_t> false_negative;
  /// Empty for labels that appear in neither prediction nor ground truth.
  std::vector<std::optional<double>> per_class_iou;
  double mean_iou = 0.0;

  static IoUReport from_confusion(const ConfusionMatrix& confusion);
  /// {"per_class": {name: iou, ...}, "mean_iou": x}. Missing names fall back
  /// to the label value.
  nlohmann::json to_json(const std::vector<std::string>& label_names = {}) const;
};

/// `num_labels` counts background, so it is |F| + 1 for a registry.
IoUReport miou(const std::vector<SeedMap>& pred, const std::vector<SeedMap>& gt, int num_labels);

}  // namespace promptseed
