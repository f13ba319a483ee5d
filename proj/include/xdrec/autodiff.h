/*
 * Copyright 2026 The xdrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace xdrec {

using Matrix =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Learning-rate group a parameter belongs to.
enum class ParamGroup { General, Semantic };

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::General;
  bool frozen = false;

  void zeroGrad() {
    grad.setZero(value.rows(), value.cols());
  }
};

namespace ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const {
    return value().rows();
  }
  Index cols() const {
    return value().cols();
  }
  /// Convenience accessor for 1x1 nodes.
  double scalar() const {
    return value()(0, 0);
  }
  Tape* tape() const {
    return tape_;
  }
  int id() const {
    return id_;
  }
  bool valid() const {
    return tape_ != nullptr;
  }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode automatic differentiation tape.
///
/// Every operation appends a node holding its forward value and a closure
/// that pushes the node's gradient to its parents. `backward` walks the
/// nodes in reverse creation order, which is a valid topological order.
/// Parameter leaves accumulate into `Parameter::grad`.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `p`. Repeated calls with the same parameter share a node.
  Var param(Parameter& p);

  Var record(Matrix value, bool requiresGrad, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(Var loss);

  const Matrix& value(int id) const {
    return nodes_[id].value;
  }
  bool requiresGrad(int id) const {
    return nodes_[id].requiresGrad;
  }
  /// Gradient buffer of a node, zero-initialized on first access.
  Matrix& grad(int id);

  std::size_t size() const {
    return nodes_.size();
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requiresGrad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> paramNodes_;
};

inline const Matrix& Var::value() const {
  return tape_->value(id_);
}

Var matmul(Var a, Var b);
/// a * b^T
Var matmulTransB(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1 x n row to every row of `a`.
Var addRow(Var a, Var row);
Var scale(Var a, double factor);
/// `s` is a 1x1 node.
Var scaleBy(Var s, Var a);
/// Elementwise product with a constant mask.
Var mulConst(Var a, const Matrix& mask);
Var concatCols(std::span<const Var> parts);
Var concatRows(std::span<const Var> parts);
Var sliceRows(Var a, Index begin, Index count);
/// Row gather; the backward pass scatter-adds.
Var gatherRows(Var a, std::span<const Index> rows);
/// Constant sparse matrix times `a`. `s` must outlive the tape.
Var spmm(const SparseMatrix& s, Var a);
Var leakyRelu(Var a, double slope);
Var relu(Var a);
/// Row softmax. With `causal`, entry (i, j) for j > i is masked out.
Var softmaxRows(Var a, bool causal);
Var layerNorm(Var a, Var gamma, Var beta, double eps);
/// Inverted dropout. Identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);
/// Scales each row to unit L2 norm. Rows with norm <= eps map to zero with a
/// zero gradient; their count is added to `*zeroRows` when non-null.
Var normalizeRows(Var a, double eps = 1e-12, std::size_t* zeroRows = nullptr);
/// sum_i (logsumexp_j S_ij - S_ii) for a square S, max-subtracted.
Var diagonalCrossEntropy(Var s);
/// log(1 + exp(x)) elementwise, stable for large |x|.
Var softplus(Var a);
Var sumAll(Var a);
Var meanAll(Var a);
/// Row-wise dot products; result is n x 1.
Var rowDot(Var a, Var b);

} // namespace ad
} // namespace xdrec
