// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "mtlasd/error.hpp"

namespace mtlasd {

namespace {

// Row-stochastic conditional affinities with entropy log(perplexity), then symmetrized.
Eigen::MatrixXd input_affinities(const Eigen::MatrixXd& x, double perplexity) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, d(i, j));
    }
    Eigen::VectorXd row(n);
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
        sum += row(j);
        weighted += row(j) * (d(i, j) - dmin);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
  }
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return p.cwiseMax(1e-12);
}

}  // namespace

TsneResult tsne(const Eigen::MatrixXd& x, const TsneConfig& cfg) {
  const Eigen::Index n = x.rows();
  require(n >= 4, ErrorCode::kInvalidArgument, "t-SNE needs at least 4 points");
  require(x.allFinite(), ErrorCode::kNonFinite, "t-SNE input holds NaN/Inf");
  require(cfg.perplexity > 0.0 && cfg.iterations > 0, ErrorCode::kInvalidArgument,
          "t-SNE needs positive perplexity and iterations");
  TsneResult out;
  out.perplexity = cfg.perplexity;
  const double max_perplexity = static_cast<double>(n - 1) / 3.0;
  if (out.perplexity > max_perplexity) {
    out.perplexity = max_perplexity;
    out.perplexity_reduced = true;
  }

  const Eigen::MatrixXd p = input_affinities(x, out.perplexity);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = init(rng);
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  const double learning_rate = std::max(static_cast<double>(n) / 12.0, 50.0);
  const int exaggeration_iters = std::min(250, cfg.iterations / 4);

  Eigen::MatrixXd num(n, n);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < exaggeration_iters ? 12.0 : 1.0;
    const double momentum = it < exaggeration_iters ? 0.5 : 0.8;
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    num = (-2.0 * y * y.transpose()).colwise() + sq;
    num.rowwise() += sq.transpose();
    num = (1.0 + num.array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    // dC/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2)
    const Eigen::MatrixXd w = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    const Eigen::MatrixXd grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const bool same = (grad.data()[i] > 0) == (velocity.data()[i] > 0);
      gains.data()[i] = std::max(same ? gains.data()[i] * 0.8 : gains.data()[i] + 0.2, 0.01);
    }
    velocity = momentum * velocity - learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  out.points = std::move(y);
  return out;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

}  // namespace

TsneResult emit_tsne_plot(const Eigen::MatrixXd& embeddings, const std::vector<TsnePoint>& labels,
                          const std::string& out_path, const TsneConfig& cfg) {
  require(static_cast<Eigen::Index>(labels.size()) == embeddings.rows(), ErrorCode::kShapeMismatch,
          "t-SNE plot: label count differs from embedding count");
  std::set<std::pair<std::string, int>> ids;
  std::map<std::string, std::vector<std::size_t>> by_type;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ids.insert({labels[i].machine_type, labels[i].machine_id});
    by_type[labels[i].machine_type].push_back(i);
  }
  require(ids.size() >= 2, ErrorCode::kInvalidArgument, "t-SNE plot needs at least two machine ids");

  const TsneResult res = tsne(embeddings, cfg);
  if (res.perplexity_reduced) {
    std::cerr << "warning: t-SNE perplexity reduced to " << res.perplexity << " for " << embeddings.rows()
              << " points\n";
  }

  const double panel = 360.0;
  const double margin = 24.0;
  const double width = static_cast<double>(by_type.size()) * (panel + margin) + margin;
  const double height = panel + 3.0 * margin + 20.0;
  std::ofstream svg(out_path);
  require(static_cast<bool>(svg), ErrorCode::kIo, "cannot write " + out_path);
  char caption[160];
  std::snprintf(caption, sizeof caption, "t-SNE perplexity=%g iterations=%d seed=%llu", res.perplexity,
                cfg.iterations, static_cast<unsigned long long>(cfg.seed));
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<metadata>" << caption << "</metadata>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  double x0 = margin;
  for (const auto& [type, members] : by_type) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (std::size_t i : members) {
      lo_x = std::min(lo_x, res.points(static_cast<Eigen::Index>(i), 0));
      hi_x = std::max(hi_x, res.points(static_cast<Eigen::Index>(i), 0));
      lo_y = std::min(lo_y, res.points(static_cast<Eigen::Index>(i), 1));
      hi_y = std::max(hi_y, res.points(static_cast<Eigen::Index>(i), 1));
    }
    const double sx = panel / std::max(hi_x - lo_x, 1e-12);
    const double sy = panel / std::max(hi_y - lo_y, 1e-12);
    svg << "<g>\n<text x=\"" << num(x0) << "\" y=\"" << num(margin - 6) << "\">" << escape(type) << "</text>\n"
        << "<rect x=\"" << num(x0) << "\" y=\"" << num(margin) << "\" width=\"" << num(panel) << "\" height=\""
        << num(panel) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    std::map<int, int> color;
    for (std::size_t i : members) color.emplace(labels[i].machine_id, 0);
    int c = 0;
    for (auto& [id, col] : color) col = c++;
    for (std::size_t i : members) {
      const double px = x0 + (res.points(static_cast<Eigen::Index>(i), 0) - lo_x) * sx;
      const double py = margin + panel - (res.points(static_cast<Eigen::Index>(i), 1) - lo_y) * sy;
      const char* fill = kPalette[color[labels[i].machine_id] % 10];
      if (labels[i].anomalous) {
        svg << "<path d=\"M" << num(px - 3) << ' ' << num(py - 3) << "L" << num(px + 3) << ' ' << num(py + 3) << "M"
            << num(px - 3) << ' ' << num(py + 3) << "L" << num(px + 3) << ' ' << num(py - 3) << "\" stroke=\"" << fill
            << "\" stroke-width=\"1.5\"/>\n";
      } else {
        svg << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"2.5\" fill=\"" << fill << "\"/>\n";
      }
    }
    double ly = margin + panel + 16.0;
    double lx = x0;
    for (const auto& [id, col] : color) {
      svg << "<circle cx=\"" << num(lx + 4) << "\" cy=\"" << num(ly - 4) << "\" r=\"4\" fill=\"" << kPalette[col % 10]
          << "\"/><text x=\"" << num(lx + 12) << "\" y=\"" << num(ly) << "\">id " << id << "</text>\n";
      lx += 56.0;
    }
    svg << "</g>\n";
    x0 += panel + margin;
  }
  svg << "<text x=\"" << num(margin) << "\" y=\"" << num(height - 8) << "\">" << caption
      << " (dots: normal, crosses: anomalous)</text>\n</svg>\n";
  require(static_cast<bool>(svg), ErrorCode::kIo, "write failed: " + out_path);
  return res;
}

}  // namespace mtlasd
