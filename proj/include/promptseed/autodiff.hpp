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

// Minimal reverse- and forward-mode differentiation over dense Eigen
// matrices. A Tape records operations in evaluation order; `backward` runs the
// adjoint sweep and `propagate_tangents` runs the tangent (JVP) sweep.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace promptseed::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Receives the upstream adjoint of the node and returns one adjoint per
  /// parent (an empty matrix means "no contribution").
  using VjpFn = std::function<std::vector<Matrix>(const Matrix& upstream)>;
  /// Receives parent tangents (nullptr when a parent has none) and returns the
  /// node tangent.
  using JvpFn = std::function<Matrix(const std::vector<const Matrix*>& tangents)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  /// Records an operation with explicit derivative rules.
  Var record(Matrix value, std::vector<Var> parents, VjpFn vjp, JvpFn jvp);

  void backward(const Var& output, const Matrix& seed);
  /// Seeds a 1x1 output with 1.
  void backward(const Var& scalar_output);
  /// Adjoint accumulated for `v`; a zero matrix of matching shape if none.
  Matrix grad(const Var& v) const;
  void zero_grad();

  void set_tangent(const Var& v, Matrix tangent);
  void propagate_tangents();
  /// Tangent of `v` after propagation; zeros if unaffected.
  Matrix tangent(const Var& v) const;
  void clear_tangents();

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Matrix value;
    Matrix grad;     // empty until something flows in
    Matrix tangent;  // empty when zero
    std::vector<int> parents;
    VjpFn vjp;
    JvpFn jvp;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  static void accumulate(Matrix& into, const Matrix& delta);

  std::vector<Node> nodes_;
};

// Dense ops. All operands must live on the same tape.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// a (n x m) plus a 1 x m row added to every row.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var hadamard(const Var& a, const Var& b);
Var relu(const Var& a);
/// Exact (erf) GELU.
Var gelu(const Var& a);
Var softmax_rows(const Var& a);
/// Per-row standardization without affine parameters.
Var layer_norm_rows(const Var& a, double eps = 1e-5);
/// 1 x m mean over rows.
Var mean_rows(const Var& a);
Var sum_all(const Var& a);
Var transpose(const Var& a);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
/// Scales a 1 x n row to unit L2 norm.
Var l2_normalize(const Var& a);
/// Reshapes preserving column-major element order.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

}  // namespace promptseed::ad
