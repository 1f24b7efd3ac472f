// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "mtlasd/config.hpp"
#include "mtlasd/frontend.hpp"
#include "mtlasd/nn/graph.hpp"

namespace mtlasd {

using Embedding = Eigen::VectorXd;

enum class Mode { kTrain, kEval };

/// Per-frame tanh scorer, softmax over time, weighted mean and standard
/// deviation, then a linear projection to the pooled width.
class AttentiveStatPooling {
 public:
  AttentiveStatPooling() = default;
  AttentiveStatPooling(int input_dim, int attention_dim, int output_dim, std::mt19937_64& rng);

  struct Output {
    nn::Var pooled;   // B x output_dim
    nn::Var moments;  // B x 2*input_dim, [mean | std]
    nn::Var weights;  // N x 1
  };
  Output forward(nn::Graph& g, nn::Var frames, int seg_len);

  void parameters(std::vector<nn::Parameter*>& out, const std::string& prefix);

  static constexpr double kStdEps = 1e-6;

 private:
  nn::Parameter score_w_, score_b_, score_v_, proj_w_, proj_b_;
};

/// One conformer block: half-step FFN, self-attention, convolution module,
/// half-step FFN, final layer norm. No positional encoding.
class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(const EncoderConfig& cfg, std::mt19937_64& rng);

  nn::Var forward(nn::Graph& g, nn::Var x, int seg_len, Mode mode, std::mt19937_64& rng);
  void parameters(std::vector<nn::Parameter*>& out, const std::string& prefix);

 private:
  struct FeedForward {
    nn::Parameter norm_g, norm_b, w1, b1, w2, b2;
  };
  nn::Var feed_forward(nn::Graph& g, FeedForward& ff, nn::Var x, bool training, std::mt19937_64& rng);

  EncoderConfig cfg_;
  FeedForward ff1_, ff2_;
  nn::Parameter att_norm_g_, att_norm_b_, wq_, bq_, wk_, wv_, bv_, wo_, bo_;
  nn::Parameter conv_norm_g_, conv_norm_b_, pw1_w_, pw1_b_, dw_kernel_, dw_bias_;
  nn::Parameter cn_g_, cn_b_, cn_mean_, cn_var_;  // batch or layer norm after the depthwise conv
  nn::Parameter pw2_w_, pw2_b_;
  nn::Parameter out_norm_g_, out_norm_b_;
};

/// Log-Mel spectrogram (T x input_dim) to a pooled embedding.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// `input` stacks B spectrograms of equal length `seg_len`. Returns B x pooled_dim.
  /// Throws NonFiniteActivation naming the block that produced NaN/Inf.
  nn::Var forward(nn::Graph& g, nn::Var input, int seg_len, Mode mode, std::mt19937_64& rng);

  /// Output of the most recent forward() before pooling, and the pooling outputs.
  const AttentiveStatPooling::Output& last_pooling() const { return last_pool_; }

  /// Eval-mode embedding of one spectrogram.
  Embedding embed(const LogMelSpectrogram& spec);
  /// Eval-mode embeddings of equal-length spectrograms, one row each.
  Eigen::MatrixXd embed_batch(const std::vector<const LogMelSpectrogram*>& specs);

  void parameters(std::vector<nn::Parameter*>& out);

 private:
  EncoderConfig cfg_;
  nn::Parameter stem_w_, stem_b_;
  std::vector<ConformerBlock> blocks_;
  AttentiveStatPooling pool_;
  AttentiveStatPooling::Output last_pool_;
};

/// Stacks spectrograms row-wise into one N x M matrix; all must share T and M.
Eigen::MatrixXd stack_spectrograms(const std::vector<const LogMelSpectrogram*>& specs);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
nn::Matrix fan_in_uniform(int rows, int cols, int fan_in, std::mt19937_64& rng);

}  // namespace mtlasd
