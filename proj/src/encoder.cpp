// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/encoder.hpp"

#include <cmath>

#include "mtlasd/error.hpp"
#include "mtlasd/nn/ops.hpp"

namespace mtlasd {

using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::Var;

namespace {

Parameter ones(const std::string& name, int n) { return {name, Matrix::Ones(1, n)}; }
Parameter zeros(const std::string& name, int n) { return {name, Matrix::Zero(1, n)}; }

Parameter uniform(const std::string& name, int rows, int cols, int fan_in, std::mt19937_64& rng) {
  return {name, fan_in_uniform(rows, cols, fan_in, rng)};
}

void check_finite(const Graph& g, Var v, int block, const char* where) {
  if (!g.value(v).allFinite()) throw NonFiniteActivation(block, where);
}

// Parameter names are assigned at collection time so copies stay consistent.
void push(std::vector<Parameter*>& out, const std::string& name, Parameter& p) {
  p.name = name;
  out.push_back(&p);
}

}  // namespace

Matrix fan_in_uniform(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Attentive statistics pooling

AttentiveStatPooling::AttentiveStatPooling(int input_dim, int attention_dim, int output_dim,
                                           std::mt19937_64& rng)
    : score_w_(uniform("", attention_dim, input_dim, input_dim, rng)),
      score_b_(uniform("", 1, attention_dim, input_dim, rng)),
      score_v_(uniform("", 1, attention_dim, attention_dim, rng)),
      proj_w_(uniform("", output_dim, 2 * input_dim, 2 * input_dim, rng)),
      proj_b_(uniform("", 1, output_dim, 2 * input_dim, rng)) {}

AttentiveStatPooling::Output AttentiveStatPooling::forward(Graph& g, Var frames, int seg_len) {
  require(seg_len >= 1, ErrorCode::kInvalidArgument, "attentive pooling needs at least one frame");
  const Var hidden = nn::tanh(g, nn::linear(g, frames, g.parameter(score_w_), g.parameter(score_b_)));
  const Var logits = nn::linear(g, hidden, g.parameter(score_v_));
  const Var weights = nn::segment_softmax(g, logits, seg_len);
  const Var moments = nn::weighted_moments(g, frames, weights, seg_len, kStdEps);
  const Var pooled = nn::linear(g, moments, g.parameter(proj_w_), g.parameter(proj_b_));
  return {pooled, moments, weights};
}

void AttentiveStatPooling::parameters(std::vector<Parameter*>& out, const std::string& prefix) {
  push(out, prefix + "score.weight", score_w_);
  push(out, prefix + "score.bias", score_b_);
  push(out, prefix + "score.v", score_v_);
  push(out, prefix + "proj.weight", proj_w_);
  push(out, prefix + "proj.bias", proj_b_);
}

// ---------------------------------------------------------------------------
// Conformer block

ConformerBlock::ConformerBlock(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  const int d = cfg.model_dim;
  const int f = cfg.ffn_units;
  for (FeedForward* ff : {&ff1_, &ff2_}) {
    ff->norm_g = ones("", d);
    ff->norm_b = zeros("", d);
    ff->w1 = uniform("", f, d, d, rng);
    ff->b1 = uniform("", 1, f, d, rng);
    ff->w2 = uniform("", d, f, f, rng);
    ff->b2 = uniform("", 1, d, f, rng);
  }
  att_norm_g_ = ones("", d);
  att_norm_b_ = zeros("", d);
  wq_ = uniform("", d, d, d, rng);
  bq_ = uniform("", 1, d, d, rng);
  // Keys carry no bias: a per-key offset cancels inside the softmax.
  wk_ = uniform("", d, d, d, rng);
  wv_ = uniform("", d, d, d, rng);
  bv_ = uniform("", 1, d, d, rng);
  wo_ = uniform("", d, d, d, rng);
  bo_ = uniform("", 1, d, d, rng);

  conv_norm_g_ = ones("", d);
  conv_norm_b_ = zeros("", d);
  pw1_w_ = uniform("", 2 * d, d, d, rng);
  pw1_b_ = uniform("", 1, 2 * d, d, rng);
  dw_kernel_ = uniform("", cfg.conv_kernel, d, cfg.conv_kernel, rng);
  // Batch norm removes a per-channel offset, so the depthwise bias only exists with layer norm.
  if (cfg.conv_norm == ConvNorm::kLayer) dw_bias_ = uniform("", 1, d, cfg.conv_kernel, rng);
  cn_g_ = ones("", d);
  cn_b_ = zeros("", d);
  if (cfg.conv_norm == ConvNorm::kBatch) {
    cn_mean_ = Parameter("", Matrix::Zero(1, d), false);
    cn_var_ = Parameter("", Matrix::Ones(1, d), false);
  }
  pw2_w_ = uniform("", d, d, d, rng);
  pw2_b_ = uniform("", 1, d, d, rng);
  out_norm_g_ = ones("", d);
  out_norm_b_ = zeros("", d);
}

Var ConformerBlock::feed_forward(Graph& g, FeedForward& ff, Var x, bool training, std::mt19937_64& rng) {
  Var h = nn::layer_norm(g, x, g.parameter(ff.norm_g), g.parameter(ff.norm_b));
  h = nn::swish(g, nn::linear(g, h, g.parameter(ff.w1), g.parameter(ff.b1)));
  h = nn::dropout(g, h, cfg_.dropout, training, rng);
  h = nn::linear(g, h, g.parameter(ff.w2), g.parameter(ff.b2));
  return nn::dropout(g, h, cfg_.dropout, training, rng);
}

Var ConformerBlock::forward(Graph& g, Var x, int seg_len, Mode mode, std::mt19937_64& rng) {
  const bool training = mode == Mode::kTrain;

  x = nn::add_scaled(g, x, feed_forward(g, ff1_, x, training, rng), 0.5);

  {
    const Var h = nn::layer_norm(g, x, g.parameter(att_norm_g_), g.parameter(att_norm_b_));
    const Var q = nn::linear(g, h, g.parameter(wq_), g.parameter(bq_));
    const Var k = nn::linear(g, h, g.parameter(wk_));
    const Var v = nn::linear(g, h, g.parameter(wv_), g.parameter(bv_));
    Var a = nn::self_attention(g, q, k, v, cfg_.attention_heads, seg_len);
    a = nn::linear(g, a, g.parameter(wo_), g.parameter(bo_));
    x = nn::add(g, x, nn::dropout(g, a, cfg_.dropout, training, rng));
  }

  {
    Var h = nn::layer_norm(g, x, g.parameter(conv_norm_g_), g.parameter(conv_norm_b_));
    h = nn::glu(g, nn::linear(g, h, g.parameter(pw1_w_), g.parameter(pw1_b_)));
    if (cfg_.conv_norm == ConvNorm::kBatch) {
      const Var zero_bias = g.constant(Matrix::Zero(1, cfg_.model_dim));
      h = nn::depthwise_conv(g, h, g.parameter(dw_kernel_), zero_bias, seg_len);
      h = nn::batch_norm(g, h, g.parameter(cn_g_), g.parameter(cn_b_), {&cn_mean_, &cn_var_}, training);
    } else {
      h = nn::depthwise_conv(g, h, g.parameter(dw_kernel_), g.parameter(dw_bias_), seg_len);
      h = nn::layer_norm(g, h, g.parameter(cn_g_), g.parameter(cn_b_));
    }
    h = nn::swish(g, h);
    h = nn::linear(g, h, g.parameter(pw2_w_), g.parameter(pw2_b_));
    x = nn::add(g, x, nn::dropout(g, h, cfg_.dropout, training, rng));
  }

  x = nn::add_scaled(g, x, feed_forward(g, ff2_, x, training, rng), 0.5);
  return nn::layer_norm(g, x, g.parameter(out_norm_g_), g.parameter(out_norm_b_));
}

void ConformerBlock::parameters(std::vector<Parameter*>& out, const std::string& prefix) {
  const std::pair<const char*, FeedForward*> ffs[] = {{"ff1.", &ff1_}, {"ff2.", &ff2_}};
  for (const auto& [name, ff] : ffs) {
    const std::string p = prefix + name;
    push(out, p + "norm.gamma", ff->norm_g);
    push(out, p + "norm.beta", ff->norm_b);
    push(out, p + "linear1.weight", ff->w1);
    push(out, p + "linear1.bias", ff->b1);
    push(out, p + "linear2.weight", ff->w2);
    push(out, p + "linear2.bias", ff->b2);
  }
  push(out, prefix + "mhsa.norm.gamma", att_norm_g_);
  push(out, prefix + "mhsa.norm.beta", att_norm_b_);
  push(out, prefix + "mhsa.query.weight", wq_);
  push(out, prefix + "mhsa.query.bias", bq_);
  push(out, prefix + "mhsa.key.weight", wk_);
  push(out, prefix + "mhsa.value.weight", wv_);
  push(out, prefix + "mhsa.value.bias", bv_);
  push(out, prefix + "mhsa.out.weight", wo_);
  push(out, prefix + "mhsa.out.bias", bo_);
  push(out, prefix + "conv.norm.gamma", conv_norm_g_);
  push(out, prefix + "conv.norm.beta", conv_norm_b_);
  push(out, prefix + "conv.pointwise1.weight", pw1_w_);
  push(out, prefix + "conv.pointwise1.bias", pw1_b_);
  push(out, prefix + "conv.depthwise.kernel", dw_kernel_);
  if (cfg_.conv_norm == ConvNorm::kLayer) push(out, prefix + "conv.depthwise.bias", dw_bias_);
  push(out, prefix + "conv.post_norm.gamma", cn_g_);
  push(out, prefix + "conv.post_norm.beta", cn_b_);
  if (cfg_.conv_norm == ConvNorm::kBatch) {
    push(out, prefix + "conv.post_norm.running_mean", cn_mean_);
    push(out, prefix + "conv.post_norm.running_var", cn_var_);
  }
  push(out, prefix + "conv.pointwise2.weight", pw2_w_);
  push(out, prefix + "conv.pointwise2.bias", pw2_b_);
  push(out, prefix + "out_norm.gamma", out_norm_g_);
  push(out, prefix + "out_norm.beta", out_norm_b_);
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg.validate();
  stem_w_ = uniform("", cfg.model_dim, cfg.input_dim, cfg.input_dim, rng);
  stem_b_ = uniform("", 1, cfg.model_dim, cfg.input_dim, rng);
  for (int b = 0; b < cfg.n_blocks; ++b) blocks_.emplace_back(cfg, rng);
  pool_ = AttentiveStatPooling(cfg.model_dim, cfg.pool_attention_dim, cfg.pooled_dim, rng);
}

Var Encoder::forward(Graph& g, Var input, int seg_len, Mode mode, std::mt19937_64& rng) {
  const Matrix& in = g.value(input);
  require(in.cols() == cfg_.input_dim, ErrorCode::kShapeMismatch,
          "encoder expects " + std::to_string(cfg_.input_dim) + " input bins, got " +
              std::to_string(in.cols()));
  require(seg_len >= 1 && in.rows() % seg_len == 0, ErrorCode::kShapeMismatch,
          "encoder input rows must be a multiple of the sequence length");
  require(in.allFinite(), ErrorCode::kNonFinite, "encoder input holds NaN/Inf");
  const bool training = mode == Mode::kTrain;

  Var x = nn::linear(g, input, g.parameter(stem_w_), g.parameter(stem_b_));
  x = nn::dropout(g, x, cfg_.dropout, training, rng);
  check_finite(g, x, -1, "input stem");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = blocks_[b].forward(g, x, seg_len, mode, rng);
    check_finite(g, x, static_cast<int>(b), "conformer block");
  }
  last_pool_ = pool_.forward(g, x, seg_len);
  check_finite(g, last_pool_.pooled, static_cast<int>(blocks_.size()), "attentive pooling");
  return last_pool_.pooled;
}

Embedding Encoder::embed(const LogMelSpectrogram& spec) {
  return embed_batch({&spec}).row(0).transpose();
}

Eigen::MatrixXd Encoder::embed_batch(const std::vector<const LogMelSpectrogram*>& specs) {
  require(!specs.empty(), ErrorCode::kInvalidArgument, "embed_batch: no spectrograms");
  Graph g;
  std::mt19937_64 unused(0);
  const Var in = g.constant(stack_spectrograms(specs));
  const Var out = forward(g, in, specs.front()->num_frames(), Mode::kEval, unused);
  return g.value(out);
}

void Encoder::parameters(std::vector<Parameter*>& out) {
  push(out, "encoder.stem.weight", stem_w_);
  push(out, "encoder.stem.bias", stem_b_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].parameters(out, "encoder.block" + std::to_string(b) + ".");
  }
  pool_.parameters(out, "encoder.pool.");
}

Eigen::MatrixXd stack_spectrograms(const std::vector<const LogMelSpectrogram*>& specs) {
  require(!specs.empty(), ErrorCode::kInvalidArgument, "no spectrograms to stack");
  const Eigen::Index t = specs.front()->frames.rows();
  const Eigen::Index m = specs.front()->frames.cols();
  Eigen::MatrixXd out(t * static_cast<Eigen::Index>(specs.size()), m);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i]->frames.rows() == t && specs[i]->frames.cols() == m, ErrorCode::kShapeMismatch,
            "spectrograms in one batch must share their shape");
    out.middleRows(static_cast<Eigen::Index>(i) * t, t) = specs[i]->frames;
  }
  return out;
}

}  // namespace mtlasd
