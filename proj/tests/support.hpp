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

// Independent reference implementations shared by the unit tests and the
// acceptance runner. Nothing here calls into the code it is used to check.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "promptseed/cam.hpp"
#include "promptseed/config.hpp"
#include "promptseed/dataset.hpp"
#include "promptseed/raster.hpp"
#include "promptseed/sams.hpp"

namespace promptseed::testing {

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);
Eigen::VectorXd random_unit(int n, std::mt19937_64& rng);

/// Central differences of a scalar function of a matrix, entry by entry.
Eigen::MatrixXd central_gradient(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x,
                                 double h = 1e-6);
/// |a - b| / max(|a|, |b|) in the Frobenius norm; 0 when both vanish.
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Row-stochastic matrix with uniform random entries before normalization.
Eigen::MatrixXd random_attention(int n, std::mt19937_64& rng);

/// Softmax of f . t_j / tau over all rows of `text`, no stabilization.
Eigen::VectorXd direct_softmax(const Eigen::VectorXd& f, const Eigen::MatrixXd& text, double tau);

/// 1 - softmax_c computed from the ratios exp(z_j - z_c), which keeps its
/// relative precision when class c takes nearly all of the mass.
double softmax_rest(const Eigen::VectorXd& f, const Eigen::MatrixXd& text, double tau, int c);

/// Symmetrize, row-normalize and propagate `t` times by index loops, then
/// mask with `box`.
Eigen::MatrixXd dense_refine(const Eigen::MatrixXd& map, const Eigen::MatrixXd& attention, int t,
                             const Eigen::MatrixXd& box);

/// Contrastive loss written as -log of a probability, no stabilization.
double mcl_reference(const Eigen::VectorXd& logits, const std::vector<int>& present);
/// Activation loss with the per-class foreground maxima supplied from outside.
double cal_reference(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps, const std::vector<int>& present,
                     const std::vector<double>& maxima);
/// Largest map value inside each class's coarse region, 0 when the region is
/// empty.
std::vector<double> fg_maxima(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                              const std::vector<int>& present);
/// Labels drawn uniformly from [0, labels].
SeedMap random_seed(int height, int width, int labels, std::mt19937_64& rng);

/// Rectangle or ellipse with random extent; never empty.
BinaryMask random_shape(int height, int width, std::mt19937_64& rng);
/// Up to `max_masks` masks mixing random shapes, near duplicates and
/// sub-regions of earlier masks, with random levels and confidences.
std::vector<MaskEntry> random_mask_set(int height, int width, int max_masks, std::mt19937_64& rng);

struct BruteForceSeeds {
  /// Input indices of the admitted masks, in admission order.
  std::vector<std::size_t> admitted;
  /// Registry class (or kBackgroundLabel) and score of each admitted mask.
  std::vector<int> labels;
  std::vector<double> scores;
  SeedMap seed;
};

/// Confidence gate, whole-first NMS, occupation filter, superpixel means,
/// per-class min-max, background power score and per-pixel resolution, each
/// done by direct pixel counting.
BruteForceSeeds brute_force_seeds(const std::vector<MaskEntry>& masks, int height, int width,
                                  const std::vector<int>& class_ids, const std::vector<Eigen::MatrixXd>& maps,
                                  const QuasiSuperpixelConfig& config, double alpha);

struct PixelIoU {
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

/// IoU per label by counting pixels one label at a time.
PixelIoU pixel_count_iou(const std::vector<SeedMap>& pred, const std::vector<SeedMap>& gt, int num_labels);

/// Mean IoU of seed maps against each sample's ground truth.
double seed_miou(const std::vector<SeedMap>& pred, const std::vector<Sample>& samples, int num_labels);

/// The small training problem: three colour classes, 24 scenes of one or two
/// objects, 15 epochs of two batches (30 steps).
TrainConfig toy_task_config();
std::vector<Sample> toy_task_train();
std::vector<Sample> toy_task_heldout();

}  // namespace promptseed::testing
