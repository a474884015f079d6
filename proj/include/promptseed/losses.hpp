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

#include <string_view>
#include <vector>

#include "promptseed/autodiff.hpp"
#include "promptseed/raster.hpp"

namespace promptseed {

struct LossBreakdown {
  double mcl = 0.0;
  double cal_fg = 0.0;
  double cal_bg = 0.0;
  double cal = 0.0;
  /// Sigmoid cross entropy on the maps when it stands in for cal.
  double baseline = 0.0;
  double total = 0.0;
};

// Multi-label contrastive loss.
//
// For every present class c the positive logit competes only against the
// logits of absent foreground classes:
//
//   L = 1/|P| sum_c [ logsumexp({Y_c} U {Y_n : n in F - P}) - Y_c ]
//
// Background logits never enter. `fg_logits` is indexed by foreground
// registry index.
double mcl_loss(const Eigen::VectorXd& fg_logits, const std::vector<int>& present);
Eigen::VectorXd mcl_gradient(const Eigen::VectorXd& fg_logits, const std::vector<int>& present);
/// Tape version over a 1 x |F| logit row.
ad::Var mcl_loss(const ad::Var& fg_logits, const std::vector<int>& present);

struct CalTerms {
  double fg = 0.0;
  double bg = 0.0;
  double cal = 0.0;
};

/// CAM activation loss between the maps of the present classes (parallel to
/// `present`, all H x W) and a coarse seed map of the same size. The
/// foreground maximum of each map is treated as a constant.
CalTerms cal_loss(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                  const std::vector<int>& present);
/// d cal / d maps with the per-class maximum held fixed.
std::vector<Eigen::MatrixXd> cal_gradient(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                                          const std::vector<int>& present);
/// Tape version; `maps` is |P| x (H*W) in row-major pixel order.
ad::Var cal_loss(const SeedMap& coarse, const ad::Var& maps, const std::vector<int>& present);

double total_loss(double mcl, double cal);

enum class BaselineKind { bce, sigmoid_ce };
BaselineKind parse_baseline_kind(std::string_view name);

/// x -> a * x + b before the sigmoid. `learnable` marks the automatic variant,
/// whose (a, b) receive gradients.
struct LinearScaling {
  double a = 1.0;
  double b = 0.0;
  bool learnable = false;

  static LinearScaling none() { return {}; }
  static LinearScaling manual(double a, double b) { return {a, b, false}; }
  static LinearScaling automatic(double a = 1.0, double b = 0.0) { return {a, b, true}; }
};

struct BaselineLoss {
  double value = 0.0;
  Eigen::MatrixXd input_gradient;
  double grad_a = 0.0;
  double grad_b = 0.0;
};

/// Mean binary cross entropy of sigmoid(a * x + b) against 0/1 targets. For
/// `bce` the inputs are classification logits (targets: image labels); for
/// `sigmoid_ce` they are positive-class CAM values (targets: seed masks).
BaselineLoss baseline_loss(BaselineKind kind, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           const LinearScaling& scaling = {});
/// Tape version returning a 1x1 loss.
ad::Var baseline_loss(BaselineKind kind, const ad::Var& inputs, const Eigen::MatrixXd& targets,
                      const LinearScaling& scaling = {});

/// 0/1 targets (|P| x H*W, row-major pixels) for sigmoid_ce from a seed map.
Eigen::MatrixXd seed_targets(const SeedMap& seed, const std::vector<int>& present);

}  // namespace promptseed
