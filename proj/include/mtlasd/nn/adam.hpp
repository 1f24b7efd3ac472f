// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtlasd/nn/graph.hpp"

namespace mtlasd::nn {

class Adam {
 public:
  struct Moments {
    Matrix first;
    Matrix second;
  };

  Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update of every trainable parameter in `params` that holds a gradient.
  /// Moments are keyed by parameter name.
  void step(const std::vector<Parameter*>& params);
  void reset();

  long steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(long steps, std::map<std::string, Moments> moments);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace mtlasd::nn
