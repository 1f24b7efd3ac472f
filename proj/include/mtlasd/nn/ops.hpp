// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "mtlasd/nn/graph.hpp"

namespace mtlasd::nn {

// Activations are N x C with one row per frame. A batch of B sequences of
// equal length T is stacked as N = B * T rows; `seg_len` is that T.

/// x * w^T + b for x: N x in, w: out x in, b: 1 x out. A default Var{} omits the bias.
Var linear(Graph& g, Var x, Var w, Var b = {});
Var add(Graph& g, Var a, Var b);
/// a + scale * b
Var add_scaled(Graph& g, Var a, Var b, double scale);
Var scale(Graph& g, Var a, double factor);
Var swish(Graph& g, Var x);
Var tanh(Graph& g, Var x);
/// Gated linear unit over the column halves: x[:, :C] * sigmoid(x[:, C:]).
Var glu(Graph& g, Var x);

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

struct BatchNormState {
  Parameter* running_mean = nullptr;  // 1 x C
  Parameter* running_var = nullptr;   // 1 x C
  double momentum = 0.1;
  double eps = 1e-5;
};
/// Normalizes each column over all rows. Training mode uses batch moments and
/// updates the running statistics; eval mode uses the running statistics.
Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState state, bool training);

/// Inverted dropout; identity unless `training` and p > 0.
Var dropout(Graph& g, Var x, double p, bool training, std::mt19937_64& rng);

/// Per-channel convolution along time, zero "same" padding, kernel: K x C (K odd).
Var depthwise_conv(Graph& g, Var x, Var kernel, Var bias, int seg_len);

/// Scaled dot-product self-attention with `heads` heads over each segment.
/// q, k, v: N x C, C divisible by heads. Returns N x C (heads concatenated).
Var self_attention(Graph& g, Var q, Var k, Var v, int heads, int seg_len);

/// Softmax of a column of logits (N x 1) within each segment.
Var segment_softmax(Graph& g, Var logits, int seg_len);

/// Per segment: [sum_t w_t h_t, sqrt(sum_t w_t (h_t - mean)^2 + eps)] -> B x 2C.
Var weighted_moments(Graph& g, Var h, Var weights, int seg_len, double eps);

/// Summed -log softmax(logits)[label] over rows. logits: B x C.
Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels);

/// Summed binary cross-entropy of sigmoid(z) against labels in {0,1}; rows labeled -1 are skipped. z: B x 1.
Var bce_with_logits(Graph& g, Var z, const std::vector<int>& labels);

/// Additive angular margin cross-entropy summed over rows whose target is >= 0.
/// x: B x d embeddings, w: K x d anchors (both normalized internally).
Var arcface_cross_entropy(Graph& g, Var x, Var w, const std::vector<int>& targets, double scale,
                          double margin);

/// Margin-modified target logit s*psi(theta) as a function of the cosine, and its
/// derivative with respect to the cosine. Cosines are clamped to +-(1 - 1e-7);
/// past theta + m > pi the curve continues linearly with slope -sin(m).
double arcface_target_logit(double cosine, double scale, double margin);
double arcface_target_logit_grad(double cosine, double scale, double margin);

inline constexpr double kCosineClamp = 1.0 - 1e-7;

}  // namespace mtlasd::nn
