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

#include "promptseed/backend.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <random>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int rows, int cols, double std) {
  std::normal_distribution<double> dist(0.0, std);
  Eigen::MatrixXd m(rows, cols);
  // Fill row by row so the draw order does not depend on storage order.
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

TransformerBlock make_block(std::mt19937_64& rng, int width, int hidden, double std, double attn_scale) {
  TransformerBlock b;
  b.wq = gaussian(rng, width, width, std);
  b.wk = gaussian(rng, width, width, std);
  b.wv = gaussian(rng, width, width, std);
  b.wo = gaussian(rng, width, width, std);
  b.w1 = gaussian(rng, width, hidden, std);
  b.w2 = gaussian(rng, hidden, width, std);
  b.attention_scale = attn_scale;
  return b;
}

Eigen::MatrixXd sinusoid_positions(int grid_h, int grid_w, int width, double amplitude) {
  Eigen::MatrixXd pos(grid_h * grid_w, width);
  const int half = width / 2;
  for (int u = 0; u < grid_h; ++u) {
    for (int v = 0; v < grid_w; ++v) {
      const int p = u * grid_w + v;
      for (int k = 0; k < width; ++k) {
        const int coord = k < half ? u : v;
        const int j = (k < half ? k : k - half) / 2;
        const double omega = std::pow(16.0, -2.0 * j / std::max(1, half));
        const double phase = coord * omega * 1.5;
        pos(p, k) = amplitude * ((k % 2 == 0) ? std::sin(phase) : std::cos(phase));
      }
    }
  }
  return pos;
}

void digest_matrix(std::uint64_t& h, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = m.data()[i];
    char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    h = fnv1a(std::string_view(bytes, sizeof(double)), h);
  }
}

}  // namespace

Eigen::MatrixXd EncoderOutputs::feature_vjp(const Eigen::VectorXd& cotangent) const {
  if (!has_gradient_path()) {
    throw GradientPathError("encoder outputs were produced with grad_mode = none");
  }
  if (cotangent.size() != embedding_jacobian.rows()) {
    throw DimensionError("feature_vjp: cotangent length differs from embedding dim");
  }
  Eigen::VectorXd flat = embedding_jacobian.transpose() * cotangent;
  return flat.reshaped(channels(), positions());
}

Eigen::MatrixXd EncoderOutputs::pooled_jacobian() const {
  if (!has_gradient_path()) {
    throw GradientPathError("encoder outputs were produced with grad_mode = none");
  }
  const int k_dim = channels();
  const int hw = positions();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k_dim, embedding_jacobian.rows());
  for (int p = 0; p < hw; ++p) {
    g += embedding_jacobian.middleCols(static_cast<Eigen::Index>(p) * k_dim, k_dim).transpose();
  }
  return g / static_cast<double>(hw);
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    for (std::size_t start = 0; start < word.size(); start += kMaxPiece) {
      std::string piece = (start == 0 ? "" : "##") + word.substr(start, kMaxPiece);
      ids.push_back(1 + static_cast<int>(fnv1a(piece) % static_cast<std::uint64_t>(vocab_size_ - 1)));
    }
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return ids;
}

TransformerBlock::Trace TransformerBlock::forward(ad::Tape& tape, const ad::Var& x) const {
  ad::Var z = ad::layer_norm_rows(x);
  ad::Var q = ad::matmul(z, tape.constant(wq));
  ad::Var k = ad::matmul(z, tape.constant(wk));
  ad::Var v = ad::matmul(z, tape.constant(wv));
  ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), attention_scale);
  ad::Var attn = ad::softmax_rows(logits);
  ad::Var h = ad::add(x, ad::matmul(ad::matmul(attn, v), tape.constant(wo)));
  ad::Var hidden = ad::gelu(ad::matmul(ad::layer_norm_rows(h), tape.constant(w1)));
  ad::Var out = ad::add(h, ad::matmul(hidden, tape.constant(w2)));
  return {out, attn};
}

ToyEncoder::ToyEncoder(ToyEncoderConfig config) : config_(config), tokenizer_(config.vocab_size) {
  if (config_.patch <= 0 || config_.feature_width <= 0 || config_.text_width <= 0 ||
      config_.embed_dim <= 0 || config_.context_length < 2 || config_.vocab_size < 2) {
    throw DomainError("ToyEncoder: invalid configuration");
  }
  std::mt19937_64 rng(config_.seed);
  const double s = config_.init_std;
  const int kw = config_.feature_width;
  const int tw = config_.text_width;
  const int patch_dim = config_.patch * config_.patch * config_.image_channels;
  patch_proj_ = gaussian(rng, patch_dim, kw, s);
  for (auto& b : image_blocks_) {
    b = make_block(rng, kw, kw * config_.mlp_ratio, s, config_.image_attention_scale / std::sqrt(kw));
  }
  image_proj_ = gaussian(rng, kw, config_.embed_dim, s);
  word_table_ = gaussian(rng, config_.vocab_size, tw, s);
  text_pos_ = gaussian(rng, config_.context_length, tw, s / 2.0);
  for (auto& b : text_blocks_) {
    b = make_block(rng, tw, tw * config_.mlp_ratio, s, config_.text_attention_scale / std::sqrt(tw));
  }
  text_proj_ = gaussian(rng, tw, config_.embed_dim, s);
  embedding_shift_ = gaussian(rng, 1, config_.embed_dim, 1.0);
  embedding_shift_ *= config_.embedding_offset / embedding_shift_.norm();
}

Eigen::MatrixXd ToyEncoder::patchify(const Image& raster) const {
  const int p = config_.patch;
  if (raster.channels != config_.image_channels) {
    throw DimensionError("encode_image: expected " + std::to_string(config_.image_channels) +
                         " channels, got " + std::to_string(raster.channels));
  }
  if (raster.height <= 0 || raster.width <= 0 || raster.height % p != 0 || raster.width % p != 0) {
    throw DimensionError("encode_image: raster " + std::to_string(raster.height) + "x" +
                         std::to_string(raster.width) + " is not tileable by patch " +
                         std::to_string(p));
  }
  if (raster.data.size() != std::size_t(raster.height) * raster.width * raster.channels) {
    throw DimensionError("encode_image: raster buffer size mismatch");
  }
  const int gh = raster.height / p;
  const int gw = raster.width / p;
  Eigen::MatrixXd patches(gh * gw, p * p * raster.channels);
  for (int u = 0; u < gh; ++u)
    for (int v = 0; v < gw; ++v) {
      int col = 0;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < raster.channels; ++c) {
            patches(u * gw + v, col++) = raster.at(u * p + y, v * p + x, c);
          }
    }
  return patches;
}

ad::Var ToyEncoder::image_trunk(ad::Tape& tape, const ad::Var& patches, int grid_h, int grid_w) const {
  ad::Var tokens = ad::add(ad::matmul(patches, tape.constant(patch_proj_)),
                           tape.constant(sinusoid_positions(grid_h, grid_w, config_.feature_width,
                                                            config_.position_scale * config_.init_std)));
  return image_blocks_[0].forward(tape, tokens).output;
}

EncoderOutputs ToyEncoder::encode_image(const Image& raster, GradMode mode) const {
  Eigen::MatrixXd patches = patchify(raster);
  const int gh = raster.height / config_.patch;
  const int gw = raster.width / config_.patch;

  EncoderOutputs out;
  out.grid_h = gh;
  out.grid_w = gw;
  out.grad_mode = mode;

  Eigen::MatrixXd features;
  {
    ad::Tape trunk;
    features = image_trunk(trunk, trunk.constant(patches), gh, gw).value();
  }
  out.feature_map = features.transpose();

  ad::Tape tape;
  ad::Var f = mode == GradMode::none ? tape.constant(features) : tape.leaf(features);
  TransformerBlock::Trace last = image_blocks_[1].forward(tape, f);
  ad::Var pooled = ad::layer_norm_rows(ad::mean_rows(last.output));
  ad::Var embed = ad::l2_normalize(
      ad::add(ad::matmul(pooled, tape.constant(image_proj_)), tape.constant(embedding_shift_)));
  out.attention = last.attention.value();
  out.image_embedding = embed.value().row(0).transpose();

  if (mode != GradMode::none) {
    const int d = config_.embed_dim;
    const int kw = config_.feature_width;
    const int hw = gh * gw;
    out.embedding_jacobian.resize(d, static_cast<Eigen::Index>(kw) * hw);
    for (int j = 0; j < d; ++j) {
      tape.zero_grad();
      Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(1, d);
      seed(0, j) = 1.0;
      tape.backward(embed, seed);
      // Tape holds F as HW x K; flatten as the K x HW map in column-major order.
      Eigen::MatrixXd g = tape.grad(f).transpose();
      out.embedding_jacobian.row(j) = g.reshaped().transpose();
    }
  }
  return out;
}

Eigen::VectorXd ToyEncoder::embedding_from_features(const Eigen::MatrixXd& feature_map) const {
  if (feature_map.rows() != config_.feature_width) {
    throw DimensionError("embedding_from_features: expected " + std::to_string(config_.feature_width) +
                         " channels");
  }
  ad::Tape tape;
  ad::Var f = tape.constant(feature_map.transpose());
  ad::Var pooled = ad::layer_norm_rows(ad::mean_rows(image_blocks_[1].forward(tape, f).output));
  ad::Var embed = ad::l2_normalize(
      ad::add(ad::matmul(pooled, tape.constant(image_proj_)), tape.constant(embedding_shift_)));
  return embed.value().row(0).transpose();
}

Eigen::MatrixXd ToyEncoder::feature_map_jvp(const Image& raster, const Image& direction) const {
  if (direction.height != raster.height || direction.width != raster.width ||
      direction.channels != raster.channels) {
    throw DimensionError("feature_map_jvp: direction shape differs from raster");
  }
  Eigen::MatrixXd patches = patchify(raster);
  Eigen::MatrixXd dpatches = patchify(direction);
  const int gh = raster.height / config_.patch;
  const int gw = raster.width / config_.patch;
  ad::Tape tape;
  ad::Var x = tape.leaf(patches);
  ad::Var f = image_trunk(tape, x, gh, gw);
  tape.set_tangent(x, dpatches);
  tape.propagate_tangents();
  return tape.tangent(f).transpose();
}

Eigen::MatrixXd ToyEncoder::token_embeddings(const std::vector<int>& ids) const {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ids.size()), config_.text_width);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config_.vocab_size) throw DomainError("token id out of vocabulary");
    rows.row(static_cast<Eigen::Index>(i)) = word_table_.row(ids[i]);
  }
  return rows;
}

ad::Var ToyEncoder::encode_prompt(ad::Tape& tape, const ad::Var& rows) const {
  if (rows.cols() != config_.text_width) {
    throw DimensionError("encode_prompt: token width " + std::to_string(rows.cols()) +
                         " differs from encoder width " + std::to_string(config_.text_width));
  }
  const Eigen::Index len = rows.rows() + 1;
  if (len > config_.context_length) {
    throw OverflowError("encode_prompt: " + std::to_string(rows.rows()) +
                        " tokens plus end-of-text exceed context length " +
                        std::to_string(config_.context_length));
  }
  ad::Var eot = tape.constant(word_table_.row(Tokenizer::kEndOfText));
  ad::Var x = ad::add(ad::concat_rows({rows, eot}), tape.constant(text_pos_.topRows(len)));
  for (const auto& b : text_blocks_) x = b.forward(tape, x).output;
  ad::Var last = ad::layer_norm_rows(config_.text_mean_pooling ? ad::mean_rows(x) : ad::slice_rows(x, len - 1, 1));
  return ad::l2_normalize(ad::add(ad::matmul(last, tape.constant(text_proj_)), tape.constant(embedding_shift_)));
}

TextEmbedding ToyEncoder::encode_prompt(const Eigen::MatrixXd& rows, int class_id) const {
  ad::Tape tape;
  ad::Var e = encode_prompt(tape, tape.constant(rows));
  return {e.value().row(0).transpose(), class_id};
}

std::uint64_t ToyEncoder::weight_digest() const {
  std::uint64_t h = 14695981039346656037ULL;
  digest_matrix(h, patch_proj_);
  for (const auto* blocks : {image_blocks_, text_blocks_}) {
    for (int i = 0; i < 2; ++i) {
      for (const auto* m : {&blocks[i].wq, &blocks[i].wk, &blocks[i].wv, &blocks[i].wo, &blocks[i].w1,
                            &blocks[i].w2}) {
        digest_matrix(h, *m);
      }
    }
  }
  digest_matrix(h, image_proj_);
  digest_matrix(h, word_table_);
  digest_matrix(h, text_pos_);
  digest_matrix(h, text_proj_);
  digest_matrix(h, embedding_shift_);
  return h;
}

double compute_logit(const Eigen::VectorXd& image_embedding, const Eigen::VectorXd& text_embedding,
                     double temperature) {
  if (!(temperature > 0.0)) throw DomainError("compute_logit: temperature must be positive");
  if (image_embedding.size() != text_embedding.size()) {
    throw DimensionError("compute_logit: embedding lengths differ");
  }
  const double denom = image_embedding.norm() * text_embedding.norm();
  if (denom == 0.0) throw DomainError("compute_logit: zero-length embedding");
  return image_embedding.dot(text_embedding) / denom / temperature;
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "toy") return BackendKind::toy;
  if (name == "oracle") return BackendKind::oracle;
  if (name == "external") return BackendKind::external;
  throw DomainError("unknown backend '" + std::string(name) + "'");
}

}  // namespace promptseed
