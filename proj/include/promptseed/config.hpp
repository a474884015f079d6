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
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "promptseed/backend.hpp"
#include "promptseed/cam.hpp"
#include "promptseed/losses.hpp"
#include "promptseed/prompts.hpp"
#include "promptseed/sams.hpp"

namespace promptseed {

enum class CoarseRefresh { per_step, per_epoch };
enum class SegLossKind { cal, sigmoid_ce };

CoarseRefresh parse_coarse_refresh(std::string_view name);
SegLossKind parse_seg_loss_kind(std::string_view name);

/// SGD with momentum, a constant warmup and cosine decay stepped per epoch.
struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int warmup_epochs = 1;
  double warmup_lr = 1e-5;
};

struct TrainConfig {
  int batch_size = 16;
  int epochs = 25;
  double learning_rate = 2e-3;
  OptimizerConfig optimizer;
  /// Stop after this many steps; 0 runs every epoch to completion.
  int max_steps = 0;

  double temperature = 0.01;
  int caa_iterations = 2;
  double box_threshold = 0.4;
  AffinityOptions affinity;
  QuasiSuperpixelConfig sams;
  double alpha = 0.6;

  int context_length = 16;
  Placement seg_placement = Placement::prepend;
  bool background_has_label = false;
  SynonymPooling synonym_pooling = SynonymPooling::max;
  CoarseRefresh coarse_refresh = CoarseRefresh::per_step;
  /// Treat the GradCAM activation weights of the segmentation stream as
  /// constants during training.
  bool detach_weights = false;
  SegLossKind seg_loss = SegLossKind::cal;
  LinearScaling seg_scaling;

  BackendKind backend = BackendKind::toy;
  /// Noise of the oracle backend's maps.
  double oracle_noise = 0.0;
  ToyEncoderConfig encoder;
  std::uint64_t seed = 7;

  /// Throws DomainError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys missing from `doc` keep the values of `base`; unknown keys throw.
  static TrainConfig from_json(const nlohmann::json& doc, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& doc);
  /// FNV-1a of the canonical JSON dump.
  std::uint64_t hash() const;
};

}  // namespace promptseed
