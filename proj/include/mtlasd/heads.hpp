// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtlasd/config.hpp"
#include "mtlasd/encoder.hpp"
#include "mtlasd/nn/graph.hpp"

namespace mtlasd {

/// Angular-margin classifier over machine IDs of one machine type. Anchors are
/// the rows of a K x d matrix, kept at unit norm; there is no bias.
struct ArcFaceHead {
  nn::Parameter anchors;
  double scale = 16.0;
  double margin = 1.28;

  ArcFaceHead() = default;
  ArcFaceHead(int classes, int dim, double scale, double margin, std::mt19937_64& rng);

  int classes() const { return static_cast<int>(anchors.value.rows()); }
  void renormalize();
};

/// Logistic classifier: probability that an embedding belongs to the target machine type.
struct TypeHead {
  nn::Parameter weight;  // 1 x d
  nn::Parameter bias;    // 1 x 1

  TypeHead() = default;
  TypeHead(int dim, std::mt19937_64& rng);

  double logit(const Embedding& x) const;
  double probability(const Embedding& x) const;
};

/// Linear softmax classifier over augmentation ids.
struct AugHead {
  nn::Parameter weight;  // C x d
  nn::Parameter bias;    // 1 x C

  AugHead() = default;
  AugHead(int classes, int dim, std::mt19937_64& rng);

  int classes() const { return static_cast<int>(weight.value.rows()); }
  Eigen::VectorXd logits(const Embedding& x) const;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

/// K logits. With a target, that class uses the margin-modified logit; without
/// one every class uses s*cos(theta). Errors on a zero-norm embedding.
Eigen::VectorXd arcface_logits(const Embedding& x, const ArcFaceHead& head,
                               std::optional<int> target = std::nullopt);

struct LossValue {
  double value = 0.0;
  bool empty = false;  // no sample contributed
};

/// Cross-entropy over rows of `logits` (B x K) whose target is >= 0.
LossValue arcface_loss(const Eigen::MatrixXd& logits, const std::vector<int>& targets,
                       Reduction reduction = Reduction::kSum);

/// Summed binary cross-entropy; every probability must lie strictly inside (0, 1).
double type_loss(const Eigen::VectorXd& probs, const std::vector<int>& labels);

/// Summed softmax cross-entropy over B x C logits; labels in [0, C).
double aug_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

/// Stage 2: l_type + alpha*l_id + beta*l_aug. Stage 1 drops l_type.
double total_loss(double l_type, double l_id, double l_aug, const LossWeights& w, int stage);

}  // namespace mtlasd
