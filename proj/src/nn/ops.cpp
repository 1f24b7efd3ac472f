// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mtlasd/error.hpp"
#include "mtlasd/parallel.hpp"

namespace mtlasd::nn {
namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::kShapeMismatch,
          std::string(op) + ": operand shapes differ (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

void check_segments(const Matrix& x, int seg_len, const char* op) {
  require(seg_len > 0 && x.rows() % seg_len == 0, ErrorCode::kShapeMismatch,
          std::string(op) + ": row count " + std::to_string(x.rows()) + " is not a multiple of " +
              std::to_string(seg_len));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var linear(Graph& g, Var x, Var w, Var b) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  const bool has_bias = b.id >= 0;
  require(xv.cols() == wv.cols(), ErrorCode::kShapeMismatch,
          "linear: input width " + std::to_string(xv.cols()) + " != weight width " +
              std::to_string(wv.cols()));
  Matrix y = xv * wv.transpose();
  if (has_bias) {
    const Matrix& bv = g.value(b);
    require(bv.rows() == 1 && bv.cols() == wv.rows(), ErrorCode::kShapeMismatch, "linear: bias shape");
    y.rowwise() += bv.row(0);
  }
  const bool rg = g.requires_grad(x) || g.requires_grad(w) || (has_bias && g.requires_grad(b));
  return g.record(std::move(y), rg, [x, w, b, has_bias](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    if (g.requires_grad(x)) g.accumulate(x.id, dy * g.value(w));
    if (g.requires_grad(w)) g.accumulate(w.id, dy.transpose() * g.value(x));
    if (has_bias && g.requires_grad(b)) g.accumulate(b.id, dy.colwise().sum());
  });
}

Var add(Graph& g, Var a, Var b) { return add_scaled(g, a, b, 1.0); }

Var add_scaled(Graph& g, Var a, Var b, double factor) {
  check_same_shape(g.value(a), g.value(b), "add");
  Matrix y = g.value(a) + factor * g.value(b);
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.record(std::move(y), rg, [a, b, factor](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    g.accumulate(a.id, dy);
    if (g.requires_grad(b)) g.accumulate(b.id, factor * dy);
  });
}

Var scale(Graph& g, Var a, double factor) {
  return g.record(factor * g.value(a), g.requires_grad(a),
                  [a, factor](Graph& g, int self) { g.accumulate(a.id, factor * g.grad(self)); });
}

Var swish(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  Matrix sig = xv.unaryExpr([](double z) { return sigmoid(z); });
  Matrix y = xv.cwiseProduct(sig);
  return g.record(std::move(y), g.requires_grad(x), [x, sig = std::move(sig)](Graph& g, int self) {
    const Matrix& xv = g.value(x);
    const Matrix d = (sig.array() + xv.array() * sig.array() * (1.0 - sig.array())).matrix();
    g.accumulate(x.id, g.grad(self).cwiseProduct(d));
  });
}

Var tanh(Graph& g, Var x) {
  Matrix y = g.value(x).array().tanh().matrix();
  return g.record(std::move(y), g.requires_grad(x), [x](Graph& g, int self) {
    const Matrix& yv = g.value(self);
    g.accumulate(x.id, (g.grad(self).array() * (1.0 - yv.array().square())).matrix());
  });
}

Var glu(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  require(xv.cols() % 2 == 0, ErrorCode::kShapeMismatch, "glu: odd column count");
  const Eigen::Index c = xv.cols() / 2;
  Matrix gate = xv.rightCols(c).unaryExpr([](double z) { return sigmoid(z); });
  Matrix y = xv.leftCols(c).cwiseProduct(gate);
  return g.record(std::move(y), g.requires_grad(x), [x, c, gate = std::move(gate)](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& xv = g.value(x);
    Matrix dx(xv.rows(), xv.cols());
    dx.leftCols(c) = dy.cwiseProduct(gate);
    dx.rightCols(c) =
        (dy.array() * xv.leftCols(c).array() * gate.array() * (1.0 - gate.array())).matrix();
    g.accumulate(x.id, dx);
  });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = g.value(x);
  const Matrix& gv = g.value(gamma);
  const Matrix& bv = g.value(beta);
  require(gv.cols() == xv.cols() && bv.cols() == xv.cols(), ErrorCode::kShapeMismatch,
          "layer_norm: gain/bias width");
  const Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix xhat = xv.colwise() - mean;
  const Eigen::VectorXd inv =
      ((xhat.array().square().rowwise().sum() / static_cast<double>(xv.cols())) + eps).rsqrt();
  xhat = inv.asDiagonal() * xhat;
  Matrix y = (xhat.array().rowwise() * gv.row(0).array()).matrix();
  y.rowwise() += bv.row(0);
  const bool rg = g.requires_grad(x) || g.requires_grad(gamma) || g.requires_grad(beta);
  return g.record(std::move(y), rg,
                  [x, gamma, beta, xhat = std::move(xhat), inv](Graph& g, int self) {
                    const Matrix& dy = g.grad(self);
                    if (g.requires_grad(gamma)) g.accumulate(gamma.id, dy.cwiseProduct(xhat).colwise().sum());
                    if (g.requires_grad(beta)) g.accumulate(beta.id, dy.colwise().sum());
                    if (g.requires_grad(x)) {
                      const Matrix dxhat = (dy.array().rowwise() * g.value(gamma).row(0).array()).matrix();
                      const double c = static_cast<double>(dy.cols());
                      const Eigen::VectorXd m1 = dxhat.rowwise().sum() / c;
                      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / c;
                      Matrix dx = dxhat.colwise() - m1;
                      dx -= m2.asDiagonal() * xhat;
                      g.accumulate(x.id, inv.asDiagonal() * dx);
                    }
                  });
}

Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState state, bool training) {
  const Matrix& xv = g.value(x);
  const Matrix& gv = g.value(gamma);
  const Matrix& bv = g.value(beta);
  require(state.running_mean && state.running_var, ErrorCode::kInvalidArgument,
          "batch_norm: running statistics missing");
  require(gv.cols() == xv.cols() && bv.cols() == xv.cols() &&
              state.running_mean->value.cols() == xv.cols(),
          ErrorCode::kShapeMismatch, "batch_norm: gain/bias width");
  const double n = static_cast<double>(xv.rows());
  RowVector mean, var;
  if (training) {
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().sum().matrix() / n;
    const double unbias = n > 1 ? n / (n - 1) : 1.0;
    state.running_mean->value =
        (1.0 - state.momentum) * state.running_mean->value + state.momentum * mean;
    state.running_var->value =
        (1.0 - state.momentum) * state.running_var->value + state.momentum * unbias * var;
  } else {
    mean = state.running_mean->value.row(0);
    var = state.running_var->value.row(0);
  }
  const RowVector inv = (var.array() + state.eps).rsqrt().matrix();
  Matrix xhat = ((xv.rowwise() - mean).array().rowwise() * inv.array()).matrix();
  Matrix y = (xhat.array().rowwise() * gv.row(0).array()).matrix();
  y.rowwise() += bv.row(0);
  const bool rg = g.requires_grad(x) || g.requires_grad(gamma) || g.requires_grad(beta);
  return g.record(std::move(y), rg,
                  [x, gamma, beta, xhat = std::move(xhat), inv, training](Graph& g, int self) {
                    const Matrix& dy = g.grad(self);
                    if (g.requires_grad(gamma)) g.accumulate(gamma.id, dy.cwiseProduct(xhat).colwise().sum());
                    if (g.requires_grad(beta)) g.accumulate(beta.id, dy.colwise().sum());
                    if (!g.requires_grad(x)) return;
                    const RowVector scale = (g.value(gamma).row(0).array() * inv.array()).matrix();
                    if (!training) {
                      g.accumulate(x.id, (dy.array().rowwise() * scale.array()).matrix());
                      return;
                    }
                    const double n = static_cast<double>(dy.rows());
                    const RowVector m1 = dy.colwise().sum() / n;
                    const RowVector m2 = dy.cwiseProduct(xhat).colwise().sum() / n;
                    Matrix dx = dy.rowwise() - m1;
                    dx -= (xhat.array().rowwise() * m2.array()).matrix();
                    g.accumulate(x.id, (dx.array().rowwise() * scale.array()).matrix());
                  });
}

Var dropout(Graph& g, Var x, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return x;
  const Matrix& xv = g.value(x);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = unit(rng) < p ? 0.0 : keep_scale;
  }
  Matrix y = xv.cwiseProduct(mask);
  return g.record(std::move(y), g.requires_grad(x), [x, mask = std::move(mask)](Graph& g, int self) {
    g.accumulate(x.id, g.grad(self).cwiseProduct(mask));
  });
}

Var depthwise_conv(Graph& g, Var x, Var kernel, Var bias, int seg_len) {
  const Matrix& xv = g.value(x);
  const Matrix& kv = g.value(kernel);
  check_segments(xv, seg_len, "depthwise_conv");
  require(kv.cols() == xv.cols() && kv.rows() % 2 == 1, ErrorCode::kShapeMismatch,
          "depthwise_conv: kernel must be K x C with K odd");
  require(g.value(bias).cols() == xv.cols(), ErrorCode::kShapeMismatch, "depthwise_conv: bias width");
  const int taps = static_cast<int>(kv.rows());
  const int pad = taps / 2;
  const int segs = static_cast<int>(xv.rows()) / seg_len;
  Matrix y(xv.rows(), xv.cols());
  y.rowwise() = g.value(bias).row(0);
  for (int s = 0; s < segs; ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
    for (int j = 0; j < taps; ++j) {
      const int off = j - pad;
      const int lo = std::max(0, -off);
      const int len = seg_len - std::abs(off);
      if (len <= 0) continue;
      y.middleRows(base + lo, len).array() +=
          xv.middleRows(base + lo + off, len).array().rowwise() * kv.row(j).array();
    }
  }
  const bool rg = g.requires_grad(x) || g.requires_grad(kernel) || g.requires_grad(bias);
  return g.record(std::move(y), rg, [x, kernel, bias, seg_len, taps, pad, segs](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& xv = g.value(x);
    const Matrix& kv = g.value(kernel);
    const bool need_x = g.requires_grad(x);
    Matrix dx = need_x ? Matrix::Zero(xv.rows(), xv.cols()) : Matrix();
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    for (int s = 0; s < segs; ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
      for (int j = 0; j < taps; ++j) {
        const int off = j - pad;
        const int lo = std::max(0, -off);
        const int len = seg_len - std::abs(off);
        if (len <= 0) continue;
        const auto dyb = dy.middleRows(base + lo, len);
        const auto xb = xv.middleRows(base + lo + off, len);
        dk.row(j) += dyb.cwiseProduct(xb).colwise().sum();
        if (need_x) dx.middleRows(base + lo + off, len).array() += dyb.array().rowwise() * kv.row(j).array();
      }
    }
    if (need_x) g.accumulate(x.id, dx);
    if (g.requires_grad(kernel)) g.accumulate(kernel.id, dk);
    if (g.requires_grad(bias)) g.accumulate(bias.id, dy.colwise().sum());
  });
}

Var self_attention(Graph& g, Var q, Var k, Var v, int heads, int seg_len) {
  const Matrix& qv = g.value(q);
  const Matrix& kv = g.value(k);
  const Matrix& vv = g.value(v);
  check_same_shape(qv, kv, "self_attention");
  check_same_shape(qv, vv, "self_attention");
  check_segments(qv, seg_len, "self_attention");
  require(heads > 0 && qv.cols() % heads == 0, ErrorCode::kShapeMismatch,
          "self_attention: width not divisible by heads");
  const Eigen::Index dh = qv.cols() / heads;
  const int segs = static_cast<int>(qv.rows()) / seg_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(segs * heads));
  Matrix y(qv.rows(), qv.cols());
  // (segment, head) pairs touch disjoint blocks, so they run in parallel.
  parallel_for(static_cast<std::size_t>(segs * heads), [&](std::size_t job, std::size_t) {
    const int s = static_cast<int>(job) / heads, h = static_cast<int>(job) % heads;
    const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
    const auto qh = qv.block(base, h * dh, seg_len, dh);
    const auto kh = kv.block(base, h * dh, seg_len, dh);
    const auto vh = vv.block(base, h * dh, seg_len, dh);
    Matrix p = scale * (qh * kh.transpose());
    const Eigen::VectorXd row_max = p.rowwise().maxCoeff();
    p = (p.colwise() - row_max).array().exp().matrix();
    const Eigen::VectorXd inv = p.rowwise().sum().cwiseInverse();
    p = inv.asDiagonal() * p;
    y.block(base, h * dh, seg_len, dh) = p * vh;
    (*probs)[job] = std::move(p);
  });
  const bool rg = g.requires_grad(q) || g.requires_grad(k) || g.requires_grad(v);
  return g.record(std::move(y), rg, [q, k, v, heads, seg_len, segs, dh, scale, probs](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& qv = g.value(q);
    const Matrix& kv = g.value(k);
    const Matrix& vv = g.value(v);
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    parallel_for(static_cast<std::size_t>(segs * heads), [&](std::size_t job, std::size_t) {
      const int s = static_cast<int>(job) / heads, h = static_cast<int>(job) % heads;
      const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
      const Matrix& p = (*probs)[job];
      const auto dyh = dy.block(base, h * dh, seg_len, dh);
      const Matrix dp = dyh * vv.block(base, h * dh, seg_len, dh).transpose();
      dv.block(base, h * dh, seg_len, dh) = p.transpose() * dyh;
      const Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
      const Matrix ds = scale * p.cwiseProduct(dp.colwise() - rs);
      dq.block(base, h * dh, seg_len, dh) = ds * kv.block(base, h * dh, seg_len, dh);
      dk.block(base, h * dh, seg_len, dh) = ds.transpose() * qv.block(base, h * dh, seg_len, dh);
    });
    if (g.requires_grad(q)) g.accumulate(q.id, dq);
    if (g.requires_grad(k)) g.accumulate(k.id, dk);
    if (g.requires_grad(v)) g.accumulate(v.id, dv);
  });
}

Var segment_softmax(Graph& g, Var logits, int seg_len) {
  const Matrix& e = g.value(logits);
  require(e.cols() == 1, ErrorCode::kShapeMismatch, "segment_softmax: expects a single column");
  check_segments(e, seg_len, "segment_softmax");
  const int segs = static_cast<int>(e.rows()) / seg_len;
  Matrix y(e.rows(), 1);
  for (int s = 0; s < segs; ++s) {
    const auto seg = e.middleRows(static_cast<Eigen::Index>(s) * seg_len, seg_len);
    const Eigen::ArrayXd ex = (seg.array() - seg.maxCoeff()).exp();
    y.middleRows(static_cast<Eigen::Index>(s) * seg_len, seg_len) = (ex / ex.sum()).matrix();
  }
  return g.record(std::move(y), g.requires_grad(logits), [logits, seg_len, segs](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& yv = g.value(self);
    Matrix dx(yv.rows(), 1);
    for (int s = 0; s < segs; ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
      const auto ys = yv.middleRows(base, seg_len);
      const auto ds = dy.middleRows(base, seg_len);
      const double dot = ys.cwiseProduct(ds).sum();
      dx.middleRows(base, seg_len) = ys.cwiseProduct((ds.array() - dot).matrix());
    }
    g.accumulate(logits.id, dx);
  });
}

Var weighted_moments(Graph& g, Var h, Var weights, int seg_len, double eps) {
  const Matrix& hv = g.value(h);
  const Matrix& wv = g.value(weights);
  require(wv.cols() == 1 && wv.rows() == hv.rows(), ErrorCode::kShapeMismatch,
          "weighted_moments: weights must be N x 1");
  check_segments(hv, seg_len, "weighted_moments");
  const int segs = static_cast<int>(hv.rows()) / seg_len;
  const Eigen::Index c = hv.cols();
  Matrix y(segs, 2 * c);
  for (int s = 0; s < segs; ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
    const auto hs = hv.middleRows(base, seg_len);
    const auto ws = wv.middleRows(base, seg_len);
    const RowVector mean = ws.transpose() * hs;
    const Matrix dev = hs.rowwise() - mean;
    const RowVector var = ws.transpose() * dev.cwiseProduct(dev);
    y.block(s, 0, 1, c) = mean;
    y.block(s, c, 1, c) = (var.array() + eps).sqrt().matrix();
  }
  const bool rg = g.requires_grad(h) || g.requires_grad(weights);
  return g.record(std::move(y), rg, [h, weights, seg_len, segs, c](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    const Matrix& yv = g.value(self);
    const Matrix& hv = g.value(h);
    const Matrix& wv = g.value(weights);
    Matrix dh(hv.rows(), hv.cols());
    Matrix dw(wv.rows(), 1);
    for (int s = 0; s < segs; ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(s) * seg_len;
      const auto hs = hv.middleRows(base, seg_len);
      const auto ws = wv.middleRows(base, seg_len);
      const RowVector mean = yv.block(s, 0, 1, c);
      const RowVector stdv = yv.block(s, c, 1, c);
      const Matrix dev = hs.rowwise() - mean;
      const RowVector dvar = (dy.block(s, c, 1, c).array() / (2.0 * stdv.array())).matrix();
      // d var / d mean = -2 sum_t w_t (h_t - mean); zero when the weights sum to one.
      const RowVector dvar_dmean = -2.0 * (ws.transpose() * dev);
      const RowVector dmean = dy.block(s, 0, 1, c) + dvar.cwiseProduct(dvar_dmean);
      const Matrix dev_scaled = (dev.array().rowwise() * dvar.array()).matrix();
      dh.middleRows(base, seg_len) = ws * dmean + 2.0 * (ws.asDiagonal() * dev_scaled);
      dw.middleRows(base, seg_len) = hs * dmean.transpose() + dev.cwiseProduct(dev_scaled).rowwise().sum();
    }
    if (g.requires_grad(h)) g.accumulate(h.id, dh);
    if (g.requires_grad(weights)) g.accumulate(weights.id, dw);
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, const std::vector<int>& labels) {
  const Matrix& z = g.value(logits);
  require(static_cast<Eigen::Index>(labels.size()) == z.rows(), ErrorCode::kShapeMismatch,
          "softmax_cross_entropy: label count");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < z.cols(), ErrorCode::kInvalidArgument,
            "softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    const double mx = z.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (z.row(i).array() - mx).exp();
    const double sum = ex.sum();
    probs.row(i) = (ex / sum).matrix().transpose();
    loss += std::log(sum) + mx - z(i, y);
  }
  return g.record(Matrix::Constant(1, 1, loss), g.requires_grad(logits),
                  [logits, labels, probs = std::move(probs)](Graph& g, int self) {
                    Matrix d = probs;
                    for (std::size_t i = 0; i < labels.size(); ++i) d(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
                    g.accumulate(logits.id, g.grad(self)(0, 0) * d);
                  });
}

Var bce_with_logits(Graph& g, Var z, const std::vector<int>& labels) {
  const Matrix& zv = g.value(z);
  require(zv.cols() == 1 && static_cast<Eigen::Index>(labels.size()) == zv.rows(),
          ErrorCode::kShapeMismatch, "bce_with_logits: expects B x 1 logits and B labels");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    require(y <= 1, ErrorCode::kInvalidArgument, "bce_with_logits: labels must be 0 or 1");
    const double x = zv(i, 0);
    loss += std::max(x, 0.0) - y * x + std::log1p(std::exp(-std::abs(x)));
  }
  return g.record(Matrix::Constant(1, 1, loss), g.requires_grad(z), [z, labels](Graph& g, int self) {
    const Matrix& zv = g.value(z);
    Matrix d(zv.rows(), 1);
    for (Eigen::Index i = 0; i < zv.rows(); ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      d(i, 0) = y < 0 ? 0.0 : sigmoid(zv(i, 0)) - y;
    }
    g.accumulate(z.id, g.grad(self)(0, 0) * d);
  });
}

double arcface_target_logit(double cosine, double scale, double margin) {
  const double c = std::clamp(cosine, -kCosineClamp, kCosineClamp);
  const double theta = std::acos(c);
  if (theta + margin <= M_PI) return scale * std::cos(theta + margin);
  return scale * (-1.0 - (theta + margin - M_PI) * std::sin(margin));
}

double arcface_target_logit_grad(double cosine, double scale, double margin) {
  if (cosine <= -kCosineClamp || cosine >= kCosineClamp) return 0.0;
  const double theta = std::acos(cosine);
  const double sin_theta = std::sqrt(1.0 - cosine * cosine);
  if (theta + margin <= M_PI) return scale * std::sin(theta + margin) / sin_theta;
  return scale * std::sin(margin) / sin_theta;
}

Var arcface_cross_entropy(Graph& g, Var x, Var w, const std::vector<int>& targets, double scale,
                          double margin) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  require(xv.cols() == wv.cols(), ErrorCode::kShapeMismatch, "arcface: embedding/anchor width differ");
  require(static_cast<Eigen::Index>(targets.size()) == xv.rows(), ErrorCode::kShapeMismatch,
          "arcface: target count");
  const Eigen::Index classes = wv.rows();
  const Eigen::VectorXd xnorm = xv.rowwise().norm();
  const Eigen::VectorXd wnorm = wv.rowwise().norm();
  for (Eigen::Index k = 0; k < classes; ++k) {
    require(wnorm(k) > 0.0, ErrorCode::kNonFinite, "arcface: zero-norm anchor");
  }
  const Matrix what = wnorm.cwiseInverse().asDiagonal() * wv;

  // d loss / d cosine, filled only for contributing rows.
  Matrix dcos = Matrix::Zero(xv.rows(), classes);
  Matrix cos(xv.rows(), classes);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    require(y < classes, ErrorCode::kInvalidArgument, "arcface: target out of range");
    require(xnorm(i) > 0.0, ErrorCode::kInvalidArgument, "arcface: zero-norm embedding");
    cos.row(i) = (what * xv.row(i).transpose()).transpose() / xnorm(i);
    Eigen::ArrayXd logits(classes);
    for (Eigen::Index k = 0; k < classes; ++k) {
      logits(k) = k == y ? arcface_target_logit(cos(i, k), scale, margin)
                         : scale * std::clamp(cos(i, k), -kCosineClamp, kCosineClamp);
    }
    const double mx = logits.maxCoeff();
    const Eigen::ArrayXd ex = (logits - mx).exp();
    const double sum = ex.sum();
    loss += std::log(sum) + mx - logits(y);
    for (Eigen::Index k = 0; k < classes; ++k) {
      const double dlogit = ex(k) / sum - (k == y ? 1.0 : 0.0);
      const double c = cos(i, k);
      const double dlogit_dcos = k == y ? arcface_target_logit_grad(c, scale, margin)
                                        : (std::abs(c) < kCosineClamp ? scale : 0.0);
      dcos(i, k) = dlogit * dlogit_dcos;
    }
  }

  const bool rg = g.requires_grad(x) || g.requires_grad(w);
  return g.record(
      Matrix::Constant(1, 1, loss), rg,
      [x, w, xnorm, wnorm, what, dcos = std::move(dcos), cos = std::move(cos), targets](Graph& g, int self) {
        const double up = g.grad(self)(0, 0);
        const Matrix& xv = g.value(x);
        Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
        Matrix dw = Matrix::Zero(what.rows(), what.cols());
        for (Eigen::Index i = 0; i < xv.rows(); ++i) {
          if (targets[static_cast<std::size_t>(i)] < 0) continue;
          const RowVector xhat = xv.row(i) / xnorm(i);
          for (Eigen::Index k = 0; k < what.rows(); ++k) {
            const double d = dcos(i, k);
            if (d == 0.0) continue;
            // cos = xhat . what_k
            dx.row(i) += d * (what.row(k) - cos(i, k) * xhat) / xnorm(i);
            dw.row(k) += d * (xhat - cos(i, k) * what.row(k)) / wnorm(k);
          }
        }
        if (g.requires_grad(x)) g.accumulate(x.id, up * dx);
        if (g.requires_grad(w)) g.accumulate(w.id, up * dw);
      });
}

}  // namespace mtlasd::nn
