// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/heads.hpp"

#include <algorithm>
#include <cmath>

#include "mtlasd/error.hpp"
#include "mtlasd/nn/ops.hpp"

namespace mtlasd {

ArcFaceHead::ArcFaceHead(int classes, int dim, double s, double m, std::mt19937_64& rng)
    : scale(s), margin(m) {
  require(classes >= 1 && dim >= 1, ErrorCode::kInvalidArgument, "arcface head needs K >= 1 and d >= 1");
  require(s > 0.0 && m >= 0.0 && m < M_PI, ErrorCode::kInvalidArgument,
          "arcface head needs s > 0 and 0 <= m < pi");
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Matrix w(classes, dim);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  anchors = nn::Parameter("head.arcface.anchors", std::move(w));
  renormalize();
}

void ArcFaceHead::renormalize() {
  for (Eigen::Index k = 0; k < anchors.value.rows(); ++k) {
    const double n = anchors.value.row(k).norm();
    require(n > 0.0 && std::isfinite(n), ErrorCode::kNonFinite, "arcface anchor collapsed to zero");
    anchors.value.row(k) /= n;
  }
}

TypeHead::TypeHead(int dim, std::mt19937_64& rng)
    : weight("head.type.weight", fan_in_uniform(1, dim, dim, rng)),
      bias("head.type.bias", fan_in_uniform(1, 1, dim, rng)) {}

double TypeHead::logit(const Embedding& x) const {
  require(x.size() == weight.value.cols(), ErrorCode::kShapeMismatch, "type head: embedding width");
  return weight.value.row(0).dot(x) + bias.value(0, 0);
}

double TypeHead::probability(const Embedding& x) const {
  const double z = logit(x);
  // Clamp keeps the probability strictly inside (0, 1) in double precision.
  const double p = 1.0 / (1.0 + std::exp(-std::clamp(z, -36.0, 36.0)));
  return p;
}

AugHead::AugHead(int classes, int dim, std::mt19937_64& rng)
    : weight("head.aug.weight", fan_in_uniform(classes, dim, dim, rng)),
      bias("head.aug.bias", fan_in_uniform(1, classes, dim, rng)) {}

Eigen::VectorXd AugHead::logits(const Embedding& x) const {
  require(x.size() == weight.value.cols(), ErrorCode::kShapeMismatch, "aug head: embedding width");
  return weight.value * x + bias.value.row(0).transpose();
}

Eigen::VectorXd arcface_logits(const Embedding& x, const ArcFaceHead& head, std::optional<int> target) {
  const nn::Matrix& w = head.anchors.value;
  require(x.size() == w.cols(), ErrorCode::kShapeMismatch, "arcface: embedding/anchor width differ");
  require(x.allFinite(), ErrorCode::kNonFinite, "arcface: embedding holds NaN/Inf");
  const double xn = x.norm();
  require(xn > 0.0, ErrorCode::kInvalidArgument, "arcface: zero-norm embedding");
  if (target) {
    require(*target >= 0 && *target < head.classes(), ErrorCode::kInvalidArgument,
            "arcface: target " + std::to_string(*target) + " out of range");
  }
  Eigen::VectorXd out(w.rows());
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    const double cosine = w.row(k).dot(x) / (w.row(k).norm() * xn);
    out(k) = target && *target == k
                 ? nn::arcface_target_logit(cosine, head.scale, head.margin)
                 : head.scale * std::clamp(cosine, -nn::kCosineClamp, nn::kCosineClamp);
  }
  return out;
}

namespace {

double row_cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& z, int y) {
  const double mx = z.maxCoeff();
  return std::log((z.array() - mx).exp().sum()) + mx - z(y);
}

}  // namespace

LossValue arcface_loss(const Eigen::MatrixXd& logits, const std::vector<int>& targets, Reduction reduction) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), ErrorCode::kShapeMismatch,
          "arcface_loss: target count");
  LossValue out;
  int used = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    require(y < logits.cols(), ErrorCode::kInvalidArgument, "arcface_loss: target out of range");
    out.value += row_cross_entropy(logits.row(i), y);
    ++used;
  }
  out.empty = used == 0;
  if (reduction == Reduction::kMean && used > 0) out.value /= used;
  return out;
}

double type_loss(const Eigen::VectorXd& probs, const std::vector<int>& labels) {
  require(static_cast<Eigen::Index>(labels.size()) == probs.size(), ErrorCode::kShapeMismatch,
          "type_loss: label count");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double a = probs(i);
    const int y = labels[static_cast<std::size_t>(i)];
    require(a > 0.0 && a < 1.0, ErrorCode::kInvalidArgument, "type_loss: probability outside (0, 1)");
    require(y == 0 || y == 1, ErrorCode::kInvalidArgument, "type_loss: labels must be 0 or 1");
    loss -= y == 1 ? std::log(a) : std::log1p(-a);
  }
  return loss;
}

double aug_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), ErrorCode::kShapeMismatch,
          "aug_loss: label count");
  require(logits.allFinite(), ErrorCode::kNonFinite, "aug_loss: non-finite logits");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), ErrorCode::kInvalidArgument,
            "aug_loss: label " + std::to_string(y) + " out of range");
    loss += row_cross_entropy(logits.row(i), y);
  }
  return loss;
}

double total_loss(double l_type, double l_id, double l_aug, const LossWeights& w, int stage) {
  require(stage == 1 || stage == 2, ErrorCode::kInvalidArgument, "stage must be 1 or 2");
  const double shared = w.alpha * l_id + w.beta * l_aug;
  return stage == 2 ? l_type + shared : shared;
}

}  // namespace mtlasd
