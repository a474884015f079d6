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

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "promptseed/autodiff.hpp"

namespace promptseed {

/// Row-major H x W x C raster of reals.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.0) {}

  double& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

enum class GradMode { none, first_order, second_order };

/// What the image encoder exposes: the feature map entering the last attention
/// layer, that layer's attention weights, and the pooled unit embedding.
struct EncoderOutputs {
  int grid_h = 0;
  int grid_w = 0;
  /// K x (H*W); column p = u * W + v.
  Eigen::MatrixXd feature_map;
  /// (H*W) x (H*W), row-stochastic.
  Eigen::MatrixXd attention;
  /// Unit-norm, length d.
  Eigen::VectorXd image_embedding;
  GradMode grad_mode = GradMode::none;
  /// d x (K*H*W) Jacobian of image_embedding w.r.t. feature_map, flattened
  /// column-major (index k + K*p). Empty when grad_mode is none.
  Eigen::MatrixXd embedding_jacobian;

  int channels() const { return static_cast<int>(feature_map.rows()); }
  int positions() const { return static_cast<int>(feature_map.cols()); }
  bool has_gradient_path() const { return grad_mode != GradMode::none; }

  /// d(cotangent . image_embedding)/d(feature_map), shaped K x (H*W).
  Eigen::MatrixXd feature_vjp(const Eigen::VectorXd& cotangent) const;
  /// K x d matrix whose (k, j) entry is the spatial mean over positions of
  /// d image_embedding_j / d F_{k,p}.
  Eigen::MatrixXd pooled_jacobian() const;
};

/// Unit-norm text embedding for one prompt.
struct TextEmbedding {
  Eigen::VectorXd vector;
  int class_id = -1;
};

struct LogitVector {
  Eigen::VectorXd values;
  double temperature = 0.01;
};

/// Lowercase word-piece tokenizer with a hashed vocabulary. Id 0 is reserved
/// for the end-of-text token.
class Tokenizer {
 public:
  static constexpr int kEndOfText = 0;
  static constexpr std::size_t kMaxPiece = 8;

  explicit Tokenizer(int vocab_size) : vocab_size_(vocab_size) {}

  std::vector<int> encode(std::string_view text) const;
  int vocab_size() const { return vocab_size_; }

 private:
  int vocab_size_;
};

struct ToyEncoderConfig {
  int patch = 16;
  int image_channels = 3;
  /// Width of image tokens (the K of the feature map).
  int feature_width = 32;
  /// Width of word embeddings and text tokens.
  int text_width = 32;
  /// Shared embedding dimension d.
  int embed_dim = 32;
  int mlp_ratio = 2;
  /// Maximum prompt length, end-of-text token included.
  int context_length = 32;
  int vocab_size = 4096;
  double init_std = 0.02;
  /// Multiplier on image attention logits; larger values concentrate
  /// attention on similar patches.
  double image_attention_scale = 40.0;
  /// Same for the text blocks.
  double text_attention_scale = 1.0;
  /// Amplitude of the image position code, in units of init_std.
  double position_scale = 5.0;
  /// Text embedding read from the end-of-text row, or from the mean of all
  /// token rows.
  bool text_mean_pooling = true;
  /// Norm of one shared vector added to both projected embeddings before
  /// normalization, which narrows the cone the embeddings live in.
  double embedding_offset = 0.0;
  std::uint64_t seed = 20240601;
};

/// One pre-LN transformer block with a single attention head.
struct TransformerBlock {
  Eigen::MatrixXd wq, wk, wv, wo, w1, w2;
  double attention_scale = 1.0;

  struct Trace {
    ad::Var output;
    ad::Var attention;
  };
  Trace forward(ad::Tape& tape, const ad::Var& x) const;
};

/// Frozen two-block image and text encoder with fixed-seed Gaussian weights.
/// Immutable after construction; all const members are safe to call
/// concurrently.
class ToyEncoder {
 public:
  explicit ToyEncoder(ToyEncoderConfig config = {});

  const ToyEncoderConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  EncoderOutputs encode_image(const Image& raster, GradMode mode) const;
  /// Runs only the last attention block: maps a K x (H*W) feature map to the
  /// unit image embedding. Used by finite-difference checks.
  Eigen::VectorXd embedding_from_features(const Eigen::MatrixXd& feature_map) const;
  /// Tangent of feature_map (K x H*W) for a raster perturbation direction.
  Eigen::MatrixXd feature_map_jvp(const Image& raster, const Image& direction) const;

  /// Word embedding rows (one per id), each of width text_width.
  Eigen::MatrixXd token_embeddings(const std::vector<int>& ids) const;
  /// Encodes prompt rows (L x text_width, without end-of-text) on a tape and
  /// returns the 1 x d unit embedding.
  ad::Var encode_prompt(ad::Tape& tape, const ad::Var& rows) const;
  /// Value-only convenience wrapper.
  TextEmbedding encode_prompt(const Eigen::MatrixXd& rows, int class_id = -1) const;

  /// Deterministic digest of every weight, for frozen-backbone checks.
  std::uint64_t weight_digest() const;

 private:
  ad::Var image_trunk(ad::Tape& tape, const ad::Var& patches, int grid_h, int grid_w) const;
  Eigen::MatrixXd patchify(const Image& raster) const;

  ToyEncoderConfig config_;
  Tokenizer tokenizer_;
  Eigen::MatrixXd patch_proj_;
  TransformerBlock image_blocks_[2];
  Eigen::MatrixXd image_proj_;
  Eigen::MatrixXd word_table_;
  Eigen::MatrixXd text_pos_;
  TransformerBlock text_blocks_[2];
  Eigen::MatrixXd text_proj_;
  Eigen::MatrixXd embedding_shift_;  // 1 x d
};

/// cos(f_I, f_T) / temperature.
double compute_logit(const Eigen::VectorXd& image_embedding, const Eigen::VectorXd& text_embedding,
                     double temperature);

/// Image-to-outputs callback for plugging in a real foundation model.
using ExternalImageEncoder = std::function<EncoderOutputs(const Image&, GradMode)>;

enum class BackendKind { toy, oracle, external };
BackendKind parse_backend_kind(std::string_view name);

}  // namespace promptseed
