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

#include <vector>

#include "promptseed/autodiff.hpp"
#include "promptseed/backend.hpp"

namespace promptseed {

/// One activation map per present class, all of the same H x W shape.
struct CamStack {
  int height = 0;
  int width = 0;
  std::vector<Eigen::MatrixXd> maps;
  /// Registry indices of the foreground classes, parallel to `maps`.
  std::vector<int> class_ids;
  bool refined = false;

  std::size_t size() const { return maps.size(); }
};

/// Softmax scores of the present classes, normalized over present and
/// background classes together.
struct ScoreVector {
  std::vector<int> classes;     // P
  std::vector<int> background;  // B
  Eigen::VectorXd scores;       // parallel to `classes`
  /// Scores over P followed by B, in that order; sums to one.
  Eigen::VectorXd all;
};

ScoreVector softmax_scores(const LogitVector& logits, const std::vector<int>& present,
                           const std::vector<int>& background);

/// GradCAM map for a class given d score / d image_embedding. The activation
/// weights are the spatial means of the back-propagated feature gradient.
Eigen::MatrixXd gradcam(const Eigen::VectorXd& score_embedding_gradient, const EncoderOutputs& outputs);
Eigen::VectorXd gradcam_weights(const Eigen::VectorXd& score_embedding_gradient,
                                const EncoderOutputs& outputs);

/// d s^c / d f_I for every present class, where the scores are a softmax over
/// logits f_I . t_j / tau taken across the rows of `text_embeddings` (present
/// classes first, then background). Returned as |P| x d.
Eigen::MatrixXd softmax_score_gradients(const Eigen::VectorXd& image_embedding,
                                        const Eigen::MatrixXd& text_embeddings, int n_present,
                                        double temperature);

/// Softmax-GradCAM for every present class. `text_embeddings` holds one unit
/// row per class in P followed by one per class in B.
CamStack softmax_gradcam(const EncoderOutputs& outputs, const Eigen::MatrixXd& text_embeddings,
                         const std::vector<int>& present, double temperature);

/// Same maps recorded on a tape as a |P| x (H*W) variable so that losses on
/// the maps differentiate back into the text embeddings. With
/// `detach_weights` the activation weights enter as constants.
ad::Var softmax_gradcam_on_tape(ad::Tape& tape, const EncoderOutputs& outputs,
                                const ad::Var& text_embeddings, int n_present, double temperature,
                                bool detach_weights = false);

enum class AffinityNormalization { row, sinkhorn };

struct AffinityOptions {
  AffinityNormalization normalization = AffinityNormalization::row;
  int sinkhorn_iterations = 20;
};

/// Symmetrized, normalized attention used for propagation.
Eigen::MatrixXd affinity_matrix(const Eigen::MatrixXd& attention, const AffinityOptions& options = {});

/// Bounding box (as a 0/1 H x W mask) of pixels whose normalized value exceeds
/// `threshold`. All zeros when no pixel qualifies.
Eigen::MatrixXd box_mask(const Eigen::MatrixXd& map, double threshold);

/// box ⊙ A^t · vec(map), with vec taken in row-major order.
Eigen::MatrixXd caa_refine_with_box(const Eigen::MatrixXd& map, const Eigen::MatrixXd& affinity,
                                    int iterations, const Eigen::MatrixXd& box);
Eigen::MatrixXd caa_refine(const Eigen::MatrixXd& map, const Eigen::MatrixXd& attention, int iterations,
                           double box_threshold, const AffinityOptions& options = {});
CamStack caa_refine(const CamStack& cams, const Eigen::MatrixXd& attention, int iterations,
                    double box_threshold, const AffinityOptions& options = {});

/// Clips negatives then min-max normalizes; a constant map becomes zeros.
Eigen::MatrixXd normalize_cam(const Eigen::MatrixXd& map);
CamStack normalize_cams(const CamStack& cams);

/// out_size x in_size half-pixel-centred linear interpolation weights.
Eigen::MatrixXd interpolation_matrix(int in_size, int out_size);
Eigen::MatrixXd upsample_bilinear(const Eigen::MatrixXd& map, int out_h, int out_w);
CamStack upsample_cams(const CamStack& cams, int out_h, int out_w);
/// Bilinear upsampling of every row of `maps`, each row a row-major h x w
/// grid. Returns rows of out_h * out_w values.
ad::Var upsample_rows_on_tape(const ad::Var& maps, int h, int w, int out_h, int out_w);

/// Row-major flatten of an H x W map and its inverse.
Eigen::VectorXd flatten_row_major(const Eigen::MatrixXd& map);
Eigen::MatrixXd unflatten_row_major(const Eigen::VectorXd& vec, int height, int width);

}  // namespace promptseed
