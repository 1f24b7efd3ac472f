// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/nn/adam.hpp"

#include <cmath>

namespace mtlasd::nn {

void Adam::step(const std::vector<Parameter*>& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Parameter* p : params) {
    if (!p->trainable || p->grad.size() == 0) continue;
    auto [it, fresh] = moments_.try_emplace(p->name);
    Moments& m = it->second;
    if (fresh || m.first.rows() != p->value.rows() || m.first.cols() != p->value.cols()) {
      m.first = Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    m.first = beta1_ * m.first + (1.0 - beta1_) * p->grad;
    m.second = beta2_ * m.second + (1.0 - beta2_) * p->grad.cwiseAbs2();
    p->value.array() -= lr_ * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + eps_);
  }
}

void Adam::reset() {
  steps_ = 0;
  moments_.clear();
}

void Adam::restore(long steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->trainable && p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Parameter* p : params) {
      if (p->trainable && p->grad.size() != 0) p->grad *= s;
    }
  }
  return norm;
}

}  // namespace mtlasd::nn
