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

#include "promptseed/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "promptseed/errors.hpp"

namespace promptseed::ad {

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }

void Tape::accumulate(Matrix& into, const Matrix& delta) {
  if (delta.size() == 0) return;
  if (into.size() == 0) {
    into = delta;
  } else {
    into += delta;
  }
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::vector<Var> parents, VjpFn vjp, JvpFn jvp) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error("autodiff: operand recorded on a different tape");
    n.parents.push_back(p.id_);
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  n.vjp = std::move(vjp);
  n.jvp = std::move(jvp);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& output, const Matrix& seed) {
  const Node& out = nodes_[output.id_];
  if (seed.rows() != out.value.rows() || seed.cols() != out.value.cols()) {
    throw DimensionError("autodiff: seed shape does not match output");
  }
  std::vector<Matrix> adj(static_cast<std::size_t>(output.id_) + 1);
  adj[output.id_] = seed;
  for (int i = output.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (adj[i].size() == 0 || !n.requires_grad) continue;
    accumulate(n.grad, adj[i]);
    if (n.is_leaf) continue;
    std::vector<Matrix> parent_adj = n.vjp(adj[i]);
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const int p = n.parents[k];
      if (!nodes_[p].requires_grad) continue;
      accumulate(adj[p], parent_adj[k]);
    }
  }
}

void Tape::backward(const Var& scalar_output) {
  if (scalar_output.rows() != 1 || scalar_output.cols() != 1) {
    throw DimensionError("autodiff: backward() without seed needs a 1x1 output");
  }
  backward(scalar_output, Matrix::Ones(1, 1));
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

void Tape::set_tangent(const Var& v, Matrix tangent) {
  Node& n = nodes_[v.id_];
  if (tangent.rows() != n.value.rows() || tangent.cols() != n.value.cols()) {
    throw DimensionError("autodiff: tangent shape does not match value");
  }
  n.tangent = std::move(tangent);
}

void Tape::propagate_tangents() {
  for (Node& n : nodes_) {
    if (n.is_leaf) continue;
    std::vector<const Matrix*> parent_tangents;
    bool any = false;
    for (int p : n.parents) {
      const Matrix& t = nodes_[p].tangent;
      parent_tangents.push_back(t.size() == 0 ? nullptr : &t);
      any = any || t.size() != 0;
    }
    if (any) {
      n.tangent = n.jvp(parent_tangents);
    } else {
      n.tangent.resize(0, 0);
    }
  }
}

Matrix Tape::tangent(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.tangent.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.tangent;
}

void Tape::clear_tangents() {
  for (Node& n : nodes_) n.tangent.resize(0, 0);
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("autodiff: use of an empty Var");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string("autodiff: shape mismatch in ") + op);
  }
}

Matrix or_zero(const Matrix* t, Eigen::Index rows, Eigen::Index cols) {
  return t ? *t : Matrix::Zero(rows, cols);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionError("autodiff: matmul inner dimensions differ");
  Matrix av = a.value();
  Matrix bv = b.value();
  Matrix out = av * bv;
  const Eigen::Index r = out.rows(), c = out.cols();
  return tape_of(a).record(
      std::move(out), {a, b},
      [av, bv](const Matrix& g) {
        return std::vector<Matrix>{g * bv.transpose(), av.transpose() * g};
      },
      [av, bv, r, c](const std::vector<const Matrix*>& t) {
        Matrix out = Matrix::Zero(r, c);
        if (t[0]) out += *t[0] * bv;
        if (t[1]) out += av * *t[1];
        return out;
      });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape_of(a).record(
      a.value() + b.value(), {a, b},
      [](const Matrix& g) { return std::vector<Matrix>{g, g}; },
      [r, c](const std::vector<const Matrix*>& t) {
        return Matrix(or_zero(t[0], r, c) + or_zero(t[1], r, c));
      });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape_of(a).record(
      a.value() - b.value(), {a, b},
      [](const Matrix& g) { return std::vector<Matrix>{g, -g}; },
      [r, c](const std::vector<const Matrix*>& t) {
        return Matrix(or_zero(t[0], r, c) - or_zero(t[1], r, c));
      });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("autodiff: add_row expects a 1 x cols row");
  }
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return tape_of(a).record(
      std::move(out), {a, row},
      [](const Matrix& g) { return std::vector<Matrix>{g, g.colwise().sum()}; },
      [r, c](const std::vector<const Matrix*>& t) {
        Matrix out = or_zero(t[0], r, c);
        if (t[1]) out.rowwise() += t[1]->row(0);
        return out;
      });
}

Var scale(const Var& a, double s) {
  return tape_of(a).record(
      a.value() * s, {a}, [s](const Matrix& g) { return std::vector<Matrix>{g * s}; },
      [s](const std::vector<const Matrix*>& t) { return Matrix(*t[0] * s); });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Matrix av = a.value();
  Matrix bv = b.value();
  Matrix out = av.cwiseProduct(bv);
  return tape_of(a).record(
      std::move(out), {a, b},
      [av, bv](const Matrix& g) {
        return std::vector<Matrix>{g.cwiseProduct(bv), g.cwiseProduct(av)};
      },
      [av, bv](const std::vector<const Matrix*>& t) {
        Matrix out = Matrix::Zero(av.rows(), av.cols());
        if (t[0]) out += t[0]->cwiseProduct(bv);
        if (t[1]) out += av.cwiseProduct(*t[1]);
        return out;
      });
}

Var relu(const Var& a) {
  Matrix mask = (a.value().array() > 0.0).cast<double>().matrix();
  Matrix out = a.value().cwiseMax(0.0);
  return tape_of(a).record(
      std::move(out), {a},
      [mask](const Matrix& g) { return std::vector<Matrix>{g.cwiseProduct(mask)}; },
      [mask](const std::vector<const Matrix*>& t) { return Matrix(t[0]->cwiseProduct(mask)); });
}

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  Matrix deriv(x.rows(), x.cols());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    out.data()[i] = v * cdf;
    deriv.data()[i] = cdf + v * pdf;
  }
  return tape_of(a).record(
      std::move(out), {a},
      [deriv](const Matrix& g) { return std::vector<Matrix>{g.cwiseProduct(deriv)}; },
      [deriv](const std::vector<const Matrix*>& t) { return Matrix(t[0]->cwiseProduct(deriv)); });
}

Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Matrix yc = y;
  auto rule = [yc](const Matrix& v) {
    Eigen::VectorXd dots = v.cwiseProduct(yc).rowwise().sum();
    Matrix out = v;
    out.colwise() -= dots;
    return Matrix(out.cwiseProduct(yc));
  };
  return tape_of(a).record(
      std::move(y), {a}, [rule](const Matrix& g) { return std::vector<Matrix>{rule(g)}; },
      [rule](const std::vector<const Matrix*>& t) { return rule(*t[0]); });
}

Var layer_norm_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix y(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    Eigen::RowVectorXd centered = x.row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = centered * inv_std(i);
  }
  Matrix yc = y;
  // The Jacobian of per-row standardization is symmetric, so the adjoint and
  // tangent rules coincide.
  auto rule = [yc, inv_std, n](const Matrix& v) {
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double mean_v = v.row(i).mean();
      const double mean_vy = v.row(i).dot(yc.row(i)) / static_cast<double>(n);
      out.row(i) = inv_std(i) * ((v.row(i).array() - mean_v).matrix() - mean_vy * yc.row(i));
    }
    return out;
  };
  return tape_of(a).record(
      std::move(y), {a}, [rule](const Matrix& g) { return std::vector<Matrix>{rule(g)}; },
      [rule](const std::vector<const Matrix*>& t) { return rule(*t[0]); });
}

Var mean_rows(const Var& a) {
  const Eigen::Index r = a.rows();
  Matrix out = a.value().colwise().mean();
  return tape_of(a).record(
      std::move(out), {a},
      [r](const Matrix& g) {
        return std::vector<Matrix>{Matrix(g.replicate(r, 1) / static_cast<double>(r))};
      },
      [](const std::vector<const Matrix*>& t) { return Matrix(t[0]->colwise().mean()); });
}

Var sum_all(const Var& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record(
      std::move(out), {a},
      [r, c](const Matrix& g) { return std::vector<Matrix>{Matrix::Constant(r, c, g(0, 0))}; },
      [](const std::vector<const Matrix*>& t) {
        Matrix out(1, 1);
        out(0, 0) = t[0]->sum();
        return out;
      });
}

Var transpose(const Var& a) {
  return tape_of(a).record(
      a.value().transpose(), {a},
      [](const Matrix& g) { return std::vector<Matrix>{g.transpose()}; },
      [](const std::vector<const Matrix*>& t) { return Matrix(t[0]->transpose()); });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("autodiff: slice_rows out of range");
  }
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape_of(a).record(
      a.value().middleRows(start, count), {a},
      [r, c, start, count](const Matrix& g) {
        Matrix out = Matrix::Zero(r, c);
        out.middleRows(start, count) = g;
        return std::vector<Matrix>{out};
      },
      [start, count](const std::vector<const Matrix*>& t) {
        return Matrix(t[0]->middleRows(start, count));
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("autodiff: concat_rows of nothing");
  const Eigen::Index c = parts.front().cols();
  Eigen::Index total = 0;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.cols() != c) throw DimensionError("autodiff: concat_rows column mismatch");
    offsets.push_back(total);
    total += p.rows();
  }
  Matrix out(total, c);
  std::vector<Eigen::Index> counts;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
    counts.push_back(parts[k].rows());
  }
  return tape_of(parts.front())
      .record(
          std::move(out), parts,
          [offsets, counts](const Matrix& g) {
            std::vector<Matrix> res;
            for (std::size_t k = 0; k < offsets.size(); ++k) {
              res.emplace_back(g.middleRows(offsets[k], counts[k]));
            }
            return res;
          },
          [offsets, counts, total, c](const std::vector<const Matrix*>& t) {
            Matrix out = Matrix::Zero(total, c);
            for (std::size_t k = 0; k < offsets.size(); ++k) {
              if (t[k]) out.middleRows(offsets[k], counts[k]) = *t[k];
            }
            return out;
          });
}

Var l2_normalize(const Var& a) {
  if (a.rows() != 1) throw DimensionError("autodiff: l2_normalize expects a row vector");
  const double norm = a.value().norm();
  if (norm == 0.0) throw DomainError("autodiff: cannot normalize a zero vector");
  Matrix y = a.value() / norm;
  Matrix yc = y;
  auto rule = [yc, norm](const Matrix& v) {
    return Matrix((v - yc * v.cwiseProduct(yc).sum()) / norm);
  };
  return tape_of(a).record(
      std::move(y), {a}, [rule](const Matrix& g) { return std::vector<Matrix>{rule(g)}; },
      [rule](const std::vector<const Matrix*>& t) { return rule(*t[0]); });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw DimensionError("autodiff: reshape size mismatch");
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out = a.value().reshaped(rows, cols);
  return tape_of(a).record(
      std::move(out), {a},
      [r, c](const Matrix& g) { return std::vector<Matrix>{Matrix(g.reshaped(r, c))}; },
      [rows, cols](const std::vector<const Matrix*>& t) {
        return Matrix(t[0]->reshaped(rows, cols));
      });
}

}  // namespace promptseed::ad
