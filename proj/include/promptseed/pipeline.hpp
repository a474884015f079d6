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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptseed/backend.hpp"
#include "promptseed/cam.hpp"
#include "promptseed/config.hpp"
#include "promptseed/dataset.hpp"
#include "promptseed/losses.hpp"
#include "promptseed/prompts.hpp"
#include "promptseed/sams.hpp"

namespace promptseed {

/// The two learnable prompt sets and the training record.
struct TrainState {
  PromptContext classification;
  PromptContext segmentation;
  int step = 0;
  /// Batch losses, one entry per optimizer step, taken before the update.
  std::vector<LossBreakdown> loss_history;
};

struct StreamResult {
  /// Logits over the foreground classes; empty for the oracle backend.
  Eigen::VectorXd fg_logits;
  /// Raw Softmax-GradCAM maps of the present classes on the patch grid.
  CamStack cams;
  /// Affinity-refined, normalized maps at image resolution.
  CamStack refined;
  SeedMap seed;
};

enum class SeedMode { coarse, fine };
SeedMode parse_seed_mode(std::string_view name);

struct CrossStreamGradients {
  /// Largest |d mcl / d segmentation context|.
  double mcl_wrt_segmentation = 0.0;
  /// Largest |d cal / d classification context|.
  double cal_wrt_classification = 0.0;
};

class Pipeline {
 public:
  Pipeline(ClassRegistry registry, TrainConfig config);

  const ClassRegistry& registry() const { return registry_; }
  const TrainConfig& config() const { return config_; }
  const ToyEncoder& encoder() const { return encoder_; }

  /// Image side of the external backend; the text side stays on the toy
  /// encoder.
  void set_external_encoder(ExternalImageEncoder encoder) { external_ = std::move(encoder); }
  void set_logger(std::function<void(const std::string&)> logger) { logger_ = std::move(logger); }

  TrainState init_state() const;
  EncoderOutputs encode(const Image& image, GradMode mode) const;

  StreamResult coarse_stream(const Sample& sample, const TrainState& state) const;
  StreamResult fine_stream(const Sample& sample, const TrainState& state) const;

  /// Affinity refinement, normalization, upsampling and superpixel seeding of
  /// raw maps.
  std::pair<CamStack, SeedMap> seed_from_raw_cams(const CamStack& raw, const Eigen::MatrixXd& attention,
                                                  const Sample& sample) const;

  TrainState train(const std::vector<Sample>& samples, TrainState state) const;
  TrainState train(const std::vector<Sample>& samples) const { return train(samples, init_state()); }

  /// Mean losses over the samples with at least one present class, coarse
  /// seeds taken from the current classification prompts.
  LossBreakdown evaluate_loss(const std::vector<Sample>& samples, const TrainState& state) const;
  CrossStreamGradients cross_stream_gradients(const std::vector<Sample>& samples, const TrainState& state) const;

  /// Writes <out>/<id>.png and <out>/<id>.json for every sample; returns the
  /// PNG paths.
  std::vector<std::filesystem::path> generate_seeds(const std::vector<Sample>& samples, const TrainState& state,
                                                    SeedMode mode, const std::filesystem::path& out) const;

 private:
  struct Cached;
  struct Objective;

  StreamResult run_stream(const Sample& sample, const PromptContext& ctx, bool segmentation) const;
  Objective objective(ad::Tape& tape, const std::vector<const Cached*>& batch, const TrainState& state,
                      const std::vector<const SeedMap*>& fixed_coarse) const;
  void log(const std::string& message) const;

  ClassRegistry registry_;
  TrainConfig config_;
  ToyEncoder encoder_;
  ExternalImageEncoder external_;
  std::function<void(const std::string&)> logger_;
};

/// A state file holds the classification and segmentation contexts as two
/// CAM-tensor records (f32). The first record's header also carries the
/// registry, the training config and its hash.
struct StoredState {
  TrainState state;
  TrainConfig config;
  ClassRegistry registry;
  /// Dataset the state was trained on; empty when not recorded.
  std::string data_dir;
};

std::string encode_state(const TrainState& state, const TrainConfig& config, const ClassRegistry& registry,
                         const std::string& data_dir = {});
StoredState decode_state(const std::string& bytes);
void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config,
                const ClassRegistry& registry, const std::string& data_dir = {});
StoredState load_state(const std::filesystem::path& path);

}  // namespace promptseed
