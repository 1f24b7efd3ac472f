// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mtlasd/config.hpp"

namespace mtlasd {

struct TsneResult {
  Eigen::MatrixXd points;  // N x 2
  double perplexity = 0.0;  // value actually used
  bool perplexity_reduced = false;
};

/// Exact t-SNE (Gaussian input affinities by per-point binary search on the
/// bandwidth, Student-t output kernel, early exaggeration, momentum gradient descent).
/// Perplexity is lowered to (N - 1) / 3 when there are too few points.
TsneResult tsne(const Eigen::MatrixXd& x, const TsneConfig& cfg);

struct TsnePoint {
  std::string machine_type;
  int machine_id = 0;
  bool anomalous = false;
};

/// Writes an SVG with one scatter panel per machine type: color by machine id,
/// crosses for anomalies. Perplexity and seed go into the caption and metadata.
/// Needs at least two machine ids overall.
TsneResult emit_tsne_plot(const Eigen::MatrixXd& embeddings, const std::vector<TsnePoint>& labels,
                          const std::string& out_path, const TsneConfig& cfg);

}  // namespace mtlasd
