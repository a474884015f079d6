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

#include "promptseed/cam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "promptseed/errors.hpp"

namespace promptseed {

ScoreVector softmax_scores(const LogitVector& logits, const std::vector<int>& present,
                           const std::vector<int>& background) {
  ScoreVector out;
  out.classes = present;
  out.background = background;
  const std::size_t n = present.size() + background.size();
  out.all.resize(static_cast<Eigen::Index>(n));
  if (n == 0) {
    out.scores.resize(0);
    return out;
  }
  auto fetch = [&](int c) {
    if (c < 0 || c >= logits.values.size()) {
      throw MissingError("softmax_scores: no logit for class " + std::to_string(c));
    }
    return logits.values(c);
  };
  Eigen::Index i = 0;
  for (int c : present) out.all(i++) = fetch(c);
  for (int c : background) out.all(i++) = fetch(c);
  const double m = out.all.maxCoeff();
  out.all = (out.all.array() - m).exp();
  out.all /= out.all.sum();
  out.scores = out.all.head(static_cast<Eigen::Index>(present.size()));
  return out;
}

Eigen::MatrixXd softmax_score_gradients(const Eigen::VectorXd& image_embedding,
                                        const Eigen::MatrixXd& text_embeddings, int n_present,
                                        double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax_score_gradients: temperature must be positive");
  if (text_embeddings.cols() != image_embedding.size()) {
    throw DimensionError("softmax_score_gradients: embedding widths differ");
  }
  if (n_present < 0 || n_present > text_embeddings.rows()) {
    throw DimensionError("softmax_score_gradients: more present classes than embeddings");
  }
  Eigen::VectorXd y = text_embeddings * image_embedding / temperature;
  Eigen::VectorXd s = (y.array() - y.maxCoeff()).exp();
  s /= s.sum();
  // ds^c/df_I = (s^c / tau) (t_c - sum_j s^j t_j)
  Eigen::RowVectorXd mean_text = s.transpose() * text_embeddings;
  Eigen::MatrixXd grads(n_present, text_embeddings.cols());
  for (int c = 0; c < n_present; ++c) {
    grads.row(c) = (s(c) / temperature) * (text_embeddings.row(c) - mean_text);
  }
  return grads;
}

Eigen::VectorXd gradcam_weights(const Eigen::VectorXd& score_embedding_gradient,
                                const EncoderOutputs& outputs) {
  Eigen::MatrixXd dfeat = outputs.feature_vjp(score_embedding_gradient);
  return dfeat.rowwise().mean();
}

Eigen::MatrixXd gradcam(const Eigen::VectorXd& score_embedding_gradient, const EncoderOutputs& outputs) {
  Eigen::VectorXd w = gradcam_weights(score_embedding_gradient, outputs);
  Eigen::VectorXd cam = (outputs.feature_map.transpose() * w).cwiseMax(0.0);
  return unflatten_row_major(cam, outputs.grid_h, outputs.grid_w);
}

CamStack softmax_gradcam(const EncoderOutputs& outputs, const Eigen::MatrixXd& text_embeddings,
                         const std::vector<int>& present, double temperature) {
  const int n_present = static_cast<int>(present.size());
  Eigen::MatrixXd grads =
      softmax_score_gradients(outputs.image_embedding, text_embeddings, n_present, temperature);
  CamStack stack;
  stack.height = outputs.grid_h;
  stack.width = outputs.grid_w;
  stack.class_ids = present;
  for (int c = 0; c < n_present; ++c) {
    stack.maps.push_back(gradcam(grads.row(c).transpose(), outputs));
  }
  return stack;
}

ad::Var softmax_gradcam_on_tape(ad::Tape& tape, const EncoderOutputs& outputs,
                                const ad::Var& text_embeddings, int n_present, double temperature,
                                bool detach_weights) {
  if (outputs.grad_mode != GradMode::second_order) {
    throw GradientPathError("differentiable GradCAM needs encoder outputs with grad_mode = second_order");
  }
  if (!(temperature > 0.0)) throw DomainError("softmax_gradcam_on_tape: temperature must be positive");
  if (n_present <= 0 || n_present > text_embeddings.rows()) {
    throw DimensionError("softmax_gradcam_on_tape: invalid present-class count");
  }
  ad::Var f_img = tape.constant(outputs.image_embedding);
  ad::Var logits = ad::scale(ad::transpose(ad::matmul(text_embeddings, f_img)), 1.0 / temperature);
  ad::Var s = ad::softmax_rows(logits);                       // 1 x n
  ad::Var mean_text = ad::matmul(s, text_embeddings);          // 1 x d
  ad::Var s_col = ad::transpose(s);                            // n x 1
  ad::Var pooled_jac_t = tape.constant(outputs.pooled_jacobian().transpose());  // d x K
  ad::Var features = tape.constant(outputs.feature_map);       // K x HW
  std::vector<ad::Var> rows;
  for (int c = 0; c < n_present; ++c) {
    ad::Var diff = ad::sub(ad::slice_rows(text_embeddings, c, 1), mean_text);
    ad::Var grad_c = ad::scale(ad::matmul(ad::slice_rows(s_col, c, 1), diff), 1.0 / temperature);
    ad::Var weights = ad::matmul(grad_c, pooled_jac_t);        // 1 x K
    if (detach_weights) weights = tape.constant(weights.value());
    rows.push_back(ad::relu(ad::matmul(weights, features)));   // 1 x HW
  }
  return ad::concat_rows(rows);
}

Eigen::MatrixXd affinity_matrix(const Eigen::MatrixXd& attention, const AffinityOptions& options) {
  if (attention.rows() != attention.cols()) throw DimensionError("affinity_matrix: attention must be square");
  Eigen::MatrixXd a = 0.5 * (attention + attention.transpose());
  auto row_normalize = [](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double s = m.row(i).sum();
      if (s > 0.0) m.row(i) /= s;
    }
  };
  if (options.normalization == AffinityNormalization::sinkhorn) {
    for (int it = 0; it < options.sinkhorn_iterations; ++it) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double s = a.col(j).sum();
        if (s > 0.0) a.col(j) /= s;
      }
      row_normalize(a);
    }
  } else {
    row_normalize(a);
  }
  return a;
}

Eigen::MatrixXd box_mask(const Eigen::MatrixXd& map, double threshold) {
  Eigen::MatrixXd norm = normalize_cam(map);
  Eigen::MatrixXd box = Eigen::MatrixXd::Zero(map.rows(), map.cols());
  Eigen::Index r0 = map.rows(), r1 = -1, c0 = map.cols(), c1 = -1;
  for (Eigen::Index r = 0; r < map.rows(); ++r)
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      if (norm(r, c) > threshold) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  if (r1 >= 0) box.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setOnes();
  return box;
}

Eigen::MatrixXd caa_refine_with_box(const Eigen::MatrixXd& map, const Eigen::MatrixXd& affinity,
                                    int iterations, const Eigen::MatrixXd& box) {
  const Eigen::Index hw = map.size();
  if (affinity.rows() != hw || affinity.cols() != hw) {
    throw DimensionError("caa_refine: map has " + std::to_string(hw) + " cells but affinity is " +
                         std::to_string(affinity.rows()) + "x" + std::to_string(affinity.cols()));
  }
  if (box.rows() != map.rows() || box.cols() != map.cols()) {
    throw DimensionError("caa_refine: box mask shape differs from map");
  }
  if (iterations < 0) throw DomainError("caa_refine: iteration count must be non-negative");
  Eigen::VectorXd v = flatten_row_major(map);
  for (int i = 0; i < iterations; ++i) v = affinity * v;
  v = v.cwiseProduct(flatten_row_major(box));
  return unflatten_row_major(v, static_cast<int>(map.rows()), static_cast<int>(map.cols()));
}

Eigen::MatrixXd caa_refine(const Eigen::MatrixXd& map, const Eigen::MatrixXd& attention, int iterations,
                           double box_threshold, const AffinityOptions& options) {
  if (attention.rows() != map.size() || attention.cols() != map.size()) {
    throw DimensionError("caa_refine: attention is not (H*W) x (H*W) for the map");
  }
  return caa_refine_with_box(map, affinity_matrix(attention, options), iterations,
                             box_mask(map, box_threshold));
}

CamStack caa_refine(const CamStack& cams, const Eigen::MatrixXd& attention, int iterations,
                    double box_threshold, const AffinityOptions& options) {
  CamStack out = cams;
  if (cams.maps.empty()) {
    out.refined = true;
    return out;
  }
  const Eigen::Index hw = static_cast<Eigen::Index>(cams.height) * cams.width;
  if (attention.rows() != hw || attention.cols() != hw) {
    throw DimensionError("caa_refine: attention is not (H*W) x (H*W) for the stack");
  }
  Eigen::MatrixXd affinity = affinity_matrix(attention, options);
  for (auto& m : out.maps) m = caa_refine_with_box(m, affinity, iterations, box_mask(m, box_threshold));
  out.refined = true;
  return out;
}

Eigen::MatrixXd normalize_cam(const Eigen::MatrixXd& map) {
  Eigen::MatrixXd clipped = map.cwiseMax(0.0);
  if (clipped.size() == 0) return clipped;
  const double lo = clipped.minCoeff();
  const double hi = clipped.maxCoeff();
  if (!(hi > lo)) return Eigen::MatrixXd::Zero(map.rows(), map.cols());
  return (clipped.array() - lo) / (hi - lo);
}

CamStack normalize_cams(const CamStack& cams) {
  CamStack out = cams;
  for (auto& m : out.maps) m = normalize_cam(m);
  return out;
}

Eigen::MatrixXd interpolation_matrix(int in_size, int out_size) {
  if (in_size <= 0 || out_size <= 0) throw DimensionError("interpolation_matrix: sizes must be positive");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out_size, in_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in_size - 1);
    const double frac = src - lo;
    m(i, lo) += 1.0 - frac;
    m(i, hi) += frac;
  }
  return m;
}

Eigen::MatrixXd upsample_bilinear(const Eigen::MatrixXd& map, int out_h, int out_w) {
  if (map.rows() == out_h && map.cols() == out_w) return map;
  return interpolation_matrix(static_cast<int>(map.rows()), out_h) * map *
         interpolation_matrix(static_cast<int>(map.cols()), out_w).transpose();
}

CamStack upsample_cams(const CamStack& cams, int out_h, int out_w) {
  CamStack out = cams;
  out.height = out_h;
  out.width = out_w;
  if (cams.maps.empty()) return out;
  Eigen::MatrixXd uy = interpolation_matrix(cams.height, out_h);
  Eigen::MatrixXd ux = interpolation_matrix(cams.width, out_w);
  for (auto& m : out.maps) m = uy * m * ux.transpose();
  return out;
}

ad::Var upsample_rows_on_tape(const ad::Var& maps, int h, int w, int out_h, int out_w) {
  if (maps.cols() != static_cast<Eigen::Index>(h) * w) {
    throw DimensionError("upsample_rows_on_tape: row length differs from h * w");
  }
  const Eigen::MatrixXd uy = interpolation_matrix(h, out_h);
  const Eigen::MatrixXd ux = interpolation_matrix(w, out_w);
  // Row-major flattening: a row holds a grid as consecutive rows of length w.
  auto apply = [](const Eigen::MatrixXd& rows, const Eigen::MatrixXd& ay, const Eigen::MatrixXd& ax, int in_h,
                  int in_w) {
    const Eigen::Index oh = ay.rows(), ow = ax.rows();
    Eigen::MatrixXd out(rows.rows(), oh * ow);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      Eigen::VectorXd row = rows.row(r).transpose();
      Eigen::MatrixXd grid = unflatten_row_major(row, in_h, in_w);
      out.row(r) = flatten_row_major(ay * grid * ax.transpose()).transpose();
    }
    return out;
  };
  Eigen::MatrixXd value = apply(maps.value(), uy, ux, h, w);
  return maps.tape()->record(
      std::move(value), {maps},
      [=](const Eigen::MatrixXd& g) {
        return std::vector<Eigen::MatrixXd>{apply(g, uy.transpose(), ux.transpose(), out_h, out_w)};
      },
      [=](const std::vector<const Eigen::MatrixXd*>& t) { return apply(*t[0], uy, ux, h, w); });
}

Eigen::VectorXd flatten_row_major(const Eigen::MatrixXd& map) {
  Eigen::MatrixXd t = map.transpose();
  return t.reshaped();
}

Eigen::MatrixXd unflatten_row_major(const Eigen::VectorXd& vec, int height, int width) {
  if (vec.size() != static_cast<Eigen::Index>(height) * width) {
    throw DimensionError("unflatten_row_major: size mismatch");
  }
  return vec.reshaped(width, height).transpose();
}

}  // namespace promptseed
