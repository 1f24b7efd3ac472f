// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace mtlasd::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A named weight tensor with its accumulated gradient. Buffers such as
/// batch-norm running statistics are stored as non-trainable parameters so they
/// travel with checkpoints.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a node on a Graph.
struct Var {
  int id = -1;
};

/// Reverse-mode tape. Nodes are recorded in execution order; backward() walks
/// them in reverse, so a graph is built once per forward pass and discarded.
class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  Var constant(Matrix value);
  /// Leaf bound to `p`; backward() adds into p.grad when p is trainable.
  Var parameter(Parameter& p);
  Var record(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient flowing into node `id`; empty until something accumulates into it.
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  void accumulate(int id, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and propagates to all parameters.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

}  // namespace mtlasd::nn
