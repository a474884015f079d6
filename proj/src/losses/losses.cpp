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

#include "promptseed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

void check_present(const Eigen::VectorXd& fg_logits, const std::vector<int>& present) {
  if (present.empty()) throw DomainError("mcl_loss: no present classes");
  for (int c : present) {
    if (c < 0 || c >= fg_logits.size()) {
      throw MissingError("mcl_loss: present class " + std::to_string(c) + " has no logit");
    }
  }
}

std::vector<int> absent_classes(Eigen::Index n, const std::vector<int>& present) {
  std::vector<bool> is_present(static_cast<std::size_t>(n), false);
  for (int c : present) is_present[static_cast<std::size_t>(c)] = true;
  std::vector<int> absent;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!is_present[static_cast<std::size_t>(i)]) absent.push_back(static_cast<int>(i));
  return absent;
}

// Returns the loss and, if `grad` is non-null, fills it.
double mcl_impl(const Eigen::VectorXd& y, const std::vector<int>& present, Eigen::VectorXd* grad) {
  check_present(y, present);
  const std::vector<int> absent = absent_classes(y.size(), present);
  if (grad) *grad = Eigen::VectorXd::Zero(y.size());
  const double inv_p = 1.0 / static_cast<double>(present.size());
  double loss = 0.0;
  for (int c : present) {
    double m = y(c);
    for (int n : absent) m = std::max(m, y(n));
    double z = std::exp(y(c) - m);
    for (int n : absent) z += std::exp(y(n) - m);
    loss += (m + std::log(z)) - y(c);
    if (grad) {
      (*grad)(c) += inv_p * (std::exp(y(c) - m) / z - 1.0);
      for (int n : absent) (*grad)(n) += inv_p * std::exp(y(n) - m) / z;
    }
  }
  return loss * inv_p;
}

void check_cal_inputs(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                      const std::vector<int>& present) {
  if (present.empty()) throw DomainError("cal_loss: no present classes");
  if (maps.size() != present.size()) throw DimensionError("cal_loss: one map per present class required");
  for (const auto& m : maps) {
    if (m.rows() != coarse.height || m.cols() != coarse.width) {
      throw DimensionError("cal_loss: map is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                           ", seed map is " + std::to_string(coarse.height) + "x" +
                           std::to_string(coarse.width));
    }
  }
}

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

// Maximum of D^c ⊙ M^c over the whole raster, zeros outside D^c included.
double masked_max(const SeedMap& coarse, const Eigen::MatrixXd& map, std::uint8_t value) {
  double best = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < coarse.height; ++y)
    for (int x = 0; x < coarse.width; ++x) best = std::max(best, coarse.at(y, x) == value ? map(y, x) : 0.0);
  return best;
}

CalTerms cal_impl(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                  const std::vector<int>& present, std::vector<Eigen::MatrixXd>* grads) {
  check_cal_inputs(coarse, maps, present);
  CalTerms t;
  const double norm = static_cast<double>(present.size()) * coarse.height * coarse.width;
  if (grads) grads->clear();
  for (std::size_t k = 0; k < present.size(); ++k) {
    const Eigen::MatrixXd& m = maps[k];
    const std::uint8_t value = seed_value(present[k]);
    const double top = masked_max(coarse, m, value);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    for (int y = 0; y < coarse.height; ++y)
      for (int x = 0; x < coarse.width; ++x) {
        if (coarse.at(y, x) == value) {
          const double r = top - m(y, x);
          t.fg += std::abs(r);
          g(y, x) = -sign(r);
        } else {
          t.bg += std::abs(m(y, x));
          g(y, x) = sign(m(y, x));
        }
      }
    if (grads) grads->push_back(g / norm);
  }
  t.cal = (t.fg + t.bg) / norm;
  return t;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double mcl_loss(const Eigen::VectorXd& fg_logits, const std::vector<int>& present) {
  return mcl_impl(fg_logits, present, nullptr);
}

Eigen::VectorXd mcl_gradient(const Eigen::VectorXd& fg_logits, const std::vector<int>& present) {
  Eigen::VectorXd g;
  mcl_impl(fg_logits, present, &g);
  return g;
}

ad::Var mcl_loss(const ad::Var& fg_logits, const std::vector<int>& present) {
  if (fg_logits.rows() != 1) throw DimensionError("mcl_loss: logits must be a 1 x |F| row");
  Eigen::VectorXd y = fg_logits.value().row(0).transpose();
  Eigen::VectorXd g;
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = mcl_impl(y, present, &g);
  Eigen::MatrixXd grad_row = g.transpose();
  return fg_logits.tape()->record(
      std::move(value), {fg_logits},
      [grad_row](const Eigen::MatrixXd& up) { return std::vector<Eigen::MatrixXd>{grad_row * up(0, 0)}; },
      [grad_row](const std::vector<const Eigen::MatrixXd*>& t) {
        Eigen::MatrixXd out(1, 1);
        out(0, 0) = grad_row.cwiseProduct(*t[0]).sum();
        return out;
      });
}

CalTerms cal_loss(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                  const std::vector<int>& present) {
  return cal_impl(coarse, maps, present, nullptr);
}

std::vector<Eigen::MatrixXd> cal_gradient(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                                          const std::vector<int>& present) {
  std::vector<Eigen::MatrixXd> g;
  cal_impl(coarse, maps, present, &g);
  return g;
}

ad::Var cal_loss(const SeedMap& coarse, const ad::Var& maps, const std::vector<int>& present) {
  const Eigen::Index hw = static_cast<Eigen::Index>(coarse.height) * coarse.width;
  if (maps.rows() != static_cast<Eigen::Index>(present.size()) || maps.cols() != hw) {
    throw DimensionError("cal_loss: expected a |P| x (H*W) map matrix");
  }
  std::vector<Eigen::MatrixXd> dense;
  for (Eigen::Index r = 0; r < maps.rows(); ++r) {
    Eigen::RowVectorXd row = maps.value().row(r);
    dense.push_back(row.reshaped(coarse.width, coarse.height).transpose());
  }
  std::vector<Eigen::MatrixXd> grads;
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = cal_impl(coarse, dense, present, &grads).cal;
  Eigen::MatrixXd grad_rows(maps.rows(), hw);
  for (Eigen::Index r = 0; r < maps.rows(); ++r) {
    Eigen::MatrixXd t = grads[static_cast<std::size_t>(r)].transpose();
    grad_rows.row(r) = t.reshaped().transpose();
  }
  return maps.tape()->record(
      std::move(value), {maps},
      [grad_rows](const Eigen::MatrixXd& up) { return std::vector<Eigen::MatrixXd>{grad_rows * up(0, 0)}; },
      [grad_rows](const std::vector<const Eigen::MatrixXd*>& t) {
        Eigen::MatrixXd out(1, 1);
        out(0, 0) = grad_rows.cwiseProduct(*t[0]).sum();
        return out;
      });
}

double total_loss(double mcl, double cal) {
  if (!std::isfinite(mcl) || !std::isfinite(cal)) throw DomainError("total_loss: non-finite component");
  return mcl + cal;
}

BaselineKind parse_baseline_kind(std::string_view name) {
  if (name == "bce") return BaselineKind::bce;
  if (name == "sigmoid_ce") return BaselineKind::sigmoid_ce;
  throw DomainError("unknown baseline loss kind '" + std::string(name) + "'");
}

BaselineLoss baseline_loss(BaselineKind kind, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           const LinearScaling& scaling) {
  if (kind != BaselineKind::bce && kind != BaselineKind::sigmoid_ce) {
    throw DomainError("baseline_loss: invalid kind");
  }
  if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols()) {
    throw DimensionError("baseline_loss: inputs and targets differ in shape");
  }
  if (inputs.size() == 0) throw DimensionError("baseline_loss: empty input");
  BaselineLoss out;
  out.input_gradient.resize(inputs.rows(), inputs.cols());
  const double n = static_cast<double>(inputs.size());
  for (Eigen::Index i = 0; i < inputs.size(); ++i) {
    const double z = scaling.a * inputs.data()[i] + scaling.b;
    const double y = targets.data()[i];
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    out.value += softplus(z) - y * z;
    const double dz = (sigmoid(z) - y) / n;
    out.input_gradient.data()[i] = dz * scaling.a;
    out.grad_a += dz * inputs.data()[i];
    out.grad_b += dz;
  }
  out.value /= n;
  if (!scaling.learnable) out.grad_a = out.grad_b = 0.0;
  return out;
}

ad::Var baseline_loss(BaselineKind kind, const ad::Var& inputs, const Eigen::MatrixXd& targets,
                      const LinearScaling& scaling) {
  BaselineLoss l = baseline_loss(kind, inputs.value(), targets, scaling);
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = l.value;
  Eigen::MatrixXd g = l.input_gradient;
  return inputs.tape()->record(
      std::move(value), {inputs},
      [g](const Eigen::MatrixXd& up) { return std::vector<Eigen::MatrixXd>{g * up(0, 0)}; },
      [g](const std::vector<const Eigen::MatrixXd*>& t) {
        Eigen::MatrixXd out(1, 1);
        out(0, 0) = g.cwiseProduct(*t[0]).sum();
        return out;
      });
}

Eigen::MatrixXd seed_targets(const SeedMap& seed, const std::vector<int>& present) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(present.size()), static_cast<Eigen::Index>(seed.labels.size()));
  for (std::size_t k = 0; k < present.size(); ++k) {
    const std::uint8_t v = seed_value(present[k]);
    for (std::size_t p = 0; p < seed.labels.size(); ++p) {
      t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = seed.labels[p] == v ? 1.0 : 0.0;
    }
  }
  return t;
}

}  // namespace promptseed
