// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/nn/graph.hpp"

#include "mtlasd/error.hpp"

namespace mtlasd::nn {

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, p.trainable, {}, &p});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, requires_grad ? std::move(backward) : Backward{},
                        nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var loss) {
  require(value(loss).rows() == 1 && value(loss).cols() == 1, ErrorCode::kShapeMismatch,
          "backward() needs a scalar loss");
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->trainable) {
        if (n.param->grad.size() == 0) n.param->grad = n.grad;
        else n.param->grad += n.grad;
      }
    } else if (n.backward) {
      n.backward(*this, id);
    }
    // Upstream nodes never read this gradient again.
    n.grad.resize(0, 0);
  }
}

}  // namespace mtlasd::nn
