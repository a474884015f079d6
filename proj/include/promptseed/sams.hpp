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

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "promptseed/cam.hpp"
#include "promptseed/raster.hpp"

namespace promptseed {

/// Label used for background superpixels.
inline constexpr int kBackgroundLabel = -1;

struct QuasiSuperpixelConfig {
  /// Confidence floor for whole-level masks.
  double t_m_whole = 0.70;
  /// Confidence floor for part and subpart masks.
  double t_m_other = 0.88;
  double nms_iou = 0.7;
  /// Maximum occupation ratio against already admitted masks.
  double t_r = 0.3;
};

/// Masks that survived confidence gating, whole-first NMS and the occupation
/// filter, in admission order.
struct QuasiSuperpixelSet {
  int height = 0;
  int width = 0;
  std::vector<MaskEntry> entries;
  /// Index of each entry in the input mask list.
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return entries.size(); }
};

struct LabeledSuperpixels {
  /// Registry indices of P, ascending; rows of fg_scores follow this order.
  std::vector<int> classes;
  /// Registry class index per superpixel, or kBackgroundLabel.
  std::vector<int> labels;
  /// |P| x n normalized foreground scores.
  Eigen::MatrixXd fg_scores;
  /// Background score per superpixel.
  Eigen::VectorXd bg_scores;
  /// Score of the label each superpixel received.
  Eigen::VectorXd label_scores;
};

QuasiSuperpixelSet generate_quasi_superpixels(const std::vector<MaskEntry>& masks, int height, int width,
                                              const QuasiSuperpixelConfig& config = {});

/// `cams` must already be refined, normalized and at mask resolution.
LabeledSuperpixels classify_superpixels(const QuasiSuperpixelSet& qsp, const CamStack& cams, double alpha);

SeedMap generate_seed_map(const QuasiSuperpixelSet& qsp, const LabeledSuperpixels& labeled);

/// classify_superpixels followed by generate_seed_map.
SeedMap seed_from_cams(const QuasiSuperpixelSet& qsp, const CamStack& cams, double alpha);

/// Dense per-class scores at image resolution. A channel whose class id is
/// kBackgroundLabel is an explicit background score.
struct ScoreMaps {
  int height = 0;
  int width = 0;
  std::vector<Eigen::MatrixXd> channels;
  std::vector<int> class_ids;

  std::optional<std::size_t> background_channel() const;
};

/// Runs the seeding pipeline with superpixel-mean scores. An explicit
/// background channel, when present, is averaged and normalized like the
/// foreground channels and replaces the derived background score.
SeedMap refine_score_map(const ScoreMaps& scores, const std::vector<MaskEntry>& masks, double alpha,
                         const QuasiSuperpixelConfig& config = {});

/// Per-pixel argmax baseline. Without a background channel a pixel is
/// background unless its best score exceeds `bg_threshold`.
SeedMap argmax_seed(const ScoreMaps& scores, double bg_threshold = 0.5);
SeedMap argmax_seed(const CamStack& cams, double bg_threshold = 0.5);

}  // namespace promptseed
