// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "mtlasd/error.hpp"
#include "mtlasd/nn/adam.hpp"
#include "mtlasd/nn/ops.hpp"
#include "test_util.hpp"

using namespace mtlasd;
using namespace mtlasd::nn;
using mtlasd::test::gradient_check;
using mtlasd::test::random_matrix;

namespace {

// Scalar probe: sum of output entries weighted by fixed random coefficients,
// so every output entry contributes to the checked gradient.
Var scalar_probe(Graph& g, Var out, std::uint64_t seed = 99) {
  const Matrix& v = g.value(out);
  std::mt19937_64 rng(seed);
  const Matrix c = random_matrix(static_cast<int>(v.rows()), static_cast<int>(v.cols()), rng);
  return g.record(Matrix::Constant(1, 1, (v.array() * c.array()).sum()), g.requires_grad(out),
                  [out, c](Graph& g, int self) { g.accumulate(out.id, g.grad(self)(0, 0) * c); });
}

Parameter param(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  return Parameter("p", random_matrix(r, c, rng, scale));
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear, add, swish, tanh, glu gradients") {
  std::mt19937_64 rng(1);
  Parameter x = param(5, 4, rng), w = param(6, 4, rng), b = param(1, 6, rng), y = param(5, 6, rng);
  CHECK(gradient_check({&x, &w, &b}, [](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, linear(g, v[0], v[1], v[2]));
        }) < 1e-6);
  CHECK(gradient_check({&x, &w}, [](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, linear(g, v[0], v[1]));
        }) < 1e-6);
  CHECK(gradient_check({&y}, [](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, add_scaled(g, swish(g, v[0]), tanh(g, v[0]), 0.5));
        }) < 1e-6);
  CHECK(gradient_check({&y}, [](Graph& g, const std::vector<Var>& v) { return scalar_probe(g, glu(g, v[0])); }) < 1e-6);
}

TEST_CASE("layer norm gradient") {
  std::mt19937_64 rng(2);
  Parameter x = param(6, 5, rng), gamma = param(1, 5, rng), beta = param(1, 5, rng);
  CHECK(gradient_check({&x, &gamma, &beta}, [](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, layer_norm(g, v[0], v[1], v[2]));
        }) < 1e-6);
}

TEST_CASE("batch norm gradient and running statistics") {
  std::mt19937_64 rng(3);
  Parameter x = param(12, 4, rng), gamma = param(1, 4, rng), beta = param(1, 4, rng);
  Parameter mean("m", Matrix::Zero(1, 4), false), var("v", Matrix::Ones(1, 4), false);
  CHECK(gradient_check({&x, &gamma, &beta}, [&](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, batch_norm(g, v[0], v[1], v[2], {&mean, &var}, true));
        }) < 1e-6);
  // Eval mode uses running statistics: fixed stats give an affine per-column map.
  Parameter m2("m", Matrix::Constant(1, 4, 0.5), false), v2("v", Matrix::Constant(1, 4, 4.0), false);
  Graph g;
  const Var out = batch_norm(g, g.constant(x.value), g.constant(Matrix::Ones(1, 4)), g.constant(Matrix::Zero(1, 4)),
                             {&m2, &v2}, false);
  const Matrix expect = (x.value.array() - 0.5) / std::sqrt(4.0 + 1e-5);
  CHECK((g.value(out) - expect).norm() < 1e-12);
  // One training pass moves running stats toward the batch moments by the momentum.
  Parameter m3("m", Matrix::Zero(1, 4), false), v3("v", Matrix::Ones(1, 4), false);
  Graph g2;
  batch_norm(g2, g2.constant(x.value), g2.constant(Matrix::Ones(1, 4)), g2.constant(Matrix::Zero(1, 4)), {&m3, &v3}, true);
  const Eigen::RowVectorXd mu = x.value.colwise().mean();
  CHECK((m3.value - 0.1 * mu).norm() < 1e-12);
}

TEST_CASE("depthwise convolution gradient and same padding") {
  std::mt19937_64 rng(4);
  Parameter x = param(14, 3, rng), k = param(5, 3, rng), b = param(1, 3, rng);
  CHECK(gradient_check({&x, &k, &b}, [](Graph& g, const std::vector<Var>& v) {
          return scalar_probe(g, depthwise_conv(g, v[0], v[1], v[2], 7));
        }) < 1e-6);
  // Brute-force oracle on segment boundaries: frames never leak across segments.
  Graph g;
  const Var out = depthwise_conv(g, g.constant(x.value), g.constant(k.value), g.constant(b.value), 7);
  for (int seg = 0; seg < 2; ++seg) {
    for (int t = 0; t < 7; ++t) {
      for (int c = 0; c < 3; ++c) {
        double acc = b.value(0, c);
        for (int j = 0; j < 5; ++j) {
          const int src = t + j - 2;
          if (src >= 0 && src < 7) acc += k.value(j, c) * x.value(seg * 7 + src, c);
        }
        CHECK(g.value(out)(seg * 7 + t, c) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("self-attention gradient and oracle") {
  std::mt19937_64 rng(5);
  Parameter q = param(10, 4, rng), k = param(10, 4, rng), v = param(10, 4, rng);
  CHECK(gradient_check({&q, &k, &v}, [](Graph& g, const std::vector<Var>& in) {
          return scalar_probe(g, self_attention(g, in[0], in[1], in[2], 2, 5));
        }) < 1e-6);
  Graph g;
  const Var out = self_attention(g, g.constant(q.value), g.constant(k.value), g.constant(v.value), 2, 5);
  for (int seg = 0; seg < 2; ++seg) {
    for (int h = 0; h < 2; ++h) {
      const Matrix qs = q.value.block(seg * 5, h * 2, 5, 2);
      const Matrix ks = k.value.block(seg * 5, h * 2, 5, 2);
      const Matrix vs = v.value.block(seg * 5, h * 2, 5, 2);
      Matrix s = qs * ks.transpose() / std::sqrt(2.0);
      for (int i = 0; i < 5; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      const Matrix expect = s * vs;
      CHECK((g.value(out).block(seg * 5, h * 2, 5, 2) - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("segment softmax and weighted moments") {
  std::mt19937_64 rng(6);
  Parameter logits = param(12, 1, rng), h = param(12, 3, rng);
  CHECK(gradient_check({&logits, &h}, [](Graph& g, const std::vector<Var>& v) {
          const Var w = segment_softmax(g, v[0], 4);
          return scalar_probe(g, weighted_moments(g, v[1], w, 4, 1e-6));
        }) < 1e-6);
  Graph g;
  const Var w = segment_softmax(g, g.constant(logits.value), 4);
  for (int s = 0; s < 3; ++s) CHECK(g.value(w).middleRows(s * 4, 4).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.value(w).minCoeff() >= 0.0);
}

TEST_CASE("cross-entropy losses") {
  std::mt19937_64 rng(7);
  Parameter z = param(4, 5, rng), zb = param(4, 1, rng);
  const std::vector<int> labels = {0, 4, 2, 2};
  CHECK(gradient_check({&z}, [&](Graph& g, const std::vector<Var>& v) { return softmax_cross_entropy(g, v[0], labels); }) < 1e-6);
  CHECK(gradient_check({&zb}, [](Graph& g, const std::vector<Var>& v) {
          return bce_with_logits(g, v[0], {1, 0, -1, 1});
        }) < 1e-6);
  Graph g;
  const double expect = std::log1p(std::exp(-zb.value(0, 0))) + std::log1p(std::exp(zb.value(1, 0))) +
                        std::log1p(std::exp(-zb.value(3, 0)));
  CHECK(g.value(bce_with_logits(g, g.constant(zb.value), {1, 0, -1, 1}))(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_cross_entropy(g, g.constant(z.value), {0, 5, 1, 1}), Error);
}

TEST_CASE("dropout is identity in eval and unbiased in training") {
  std::mt19937_64 rng(8);
  const Matrix x = Matrix::Ones(200, 50);
  Graph g;
  const Var e = dropout(g, g.constant(x), 0.1, false, rng);
  CHECK(g.value(e) == x);
  const Var t = dropout(g, g.constant(x), 0.1, true, rng);
  CHECK(g.value(t).mean() == doctest::Approx(1.0).epsilon(0.02));
  const double zero_frac = (g.value(t).array() == 0.0).cast<double>().mean();
  CHECK(zero_frac == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("adam takes bias-corrected steps and skips frozen tensors") {
  Parameter a("a", Matrix::Constant(1, 2, 1.0));
  Parameter frozen("f", Matrix::Constant(1, 2, 1.0), false);
  a.grad = Matrix::Constant(1, 2, 3.0);
  frozen.grad = Matrix::Constant(1, 2, 3.0);
  Adam opt(0.1);
  opt.step({&a, &frozen});
  // First step moves every coordinate by lr * sign(grad) (up to eps).
  CHECK(a.value(0, 0) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(frozen.value == Matrix::Constant(1, 2, 1.0));
  CHECK(opt.steps() == 1);
  opt.reset();
  CHECK(opt.steps() == 0);
  CHECK(opt.moments().empty());
}

TEST_CASE("gradient clipping rescales to the max norm") {
  Parameter a("a", Matrix::Zero(1, 2));
  a.grad = (Matrix(1, 2) << 3.0, 4.0).finished();
  CHECK(clip_grad_norm({&a}, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

}
