// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/scorer.hpp"

#include <algorithm>
#include <cmath>

#include "mtlasd/error.hpp"
#include "mtlasd/metrics.hpp"

namespace mtlasd {

namespace {

std::string key_name(const GroupKey& key) { return key.first + "/id_" + std::to_string(key.second); }

}  // namespace

const char* score_kind_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kArc: return "arc";
    case ScoreKind::kMaha: return "maha";
    case ScoreKind::kOut: return "out";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& name) {
  for (ScoreKind k : kScoreKinds) {
    if (name == score_kind_name(k)) return k;
  }
  fail(ErrorCode::kInvalidArgument, "unknown score kind '" + name + "'");
}

double ScoreTriple::get(ScoreKind kind) const {
  switch (kind) {
    case ScoreKind::kArc: return arc;
    case ScoreKind::kMaha: return maha;
    case ScoreKind::kOut: return out;
  }
  return 0.0;
}

double& ScoreTriple::get(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kArc: return arc;
    case ScoreKind::kMaha: return maha;
    case ScoreKind::kOut: break;
  }
  return out;
}

void GroupStatistics::factorize() {
  factor.compute(covariance);
  require(factor.info() == Eigen::Success, ErrorCode::kNonFinite,
          "covariance is not positive definite after regularization");
}

const GroupStatistics& NormalStatistics::at(const GroupKey& key) const {
  const auto it = groups.find(key);
  require(it != groups.end(), ErrorCode::kNotFound, "no normal statistics for " + key_name(key));
  return it->second;
}

GroupStatistics fit_group_statistics(const Eigen::MatrixXd& x, const ScorerConfig& cfg, const std::string& name) {
  require(x.rows() >= 2, ErrorCode::kInvalidArgument,
          name + ": needs at least 2 embeddings, got " + std::to_string(x.rows()));
  require(x.allFinite(), ErrorCode::kNonFinite, name + ": non-finite embedding");
  GroupStatistics s;
  s.count = static_cast<int>(x.rows());
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  s.epsilon = std::max(cfg.cov_reg_rel * cov.trace() / static_cast<double>(cov.rows()), cfg.cov_reg_floor);
  cov.diagonal().array() += s.epsilon;
  s.covariance = std::move(cov);
  s.factorize();
  return s;
}

NormalStatistics fit_normal_statistics(const std::map<GroupKey, Eigen::MatrixXd>& embeddings,
                                       const ScorerConfig& cfg) {
  NormalStatistics out;
  for (const auto& [key, x] : embeddings) out.groups.emplace(key, fit_group_statistics(x, cfg, key_name(key)));
  return out;
}

double mahalanobis_score(const Eigen::VectorXd& x, const GroupStatistics& stats) {
  require(x.size() == stats.mean.size(), ErrorCode::kShapeMismatch, "mahalanobis: dimension mismatch");
  // With Sigma = L L^T the squared distance is |L^-1 (x - mu)|^2.
  const Eigen::VectorXd white = stats.factor.matrixL().solve(x - stats.mean);
  return white.norm();
}

double mahalanobis_score(const Eigen::VectorXd& x, const NormalStatistics& stats, const GroupKey& key) {
  return mahalanobis_score(x, stats.at(key));
}

double score_out(double p) {
  require(p > 0.0 && p <= 1.0, ErrorCode::kInvalidArgument, "score_out: probability outside (0, 1]");
  return -std::log(p);
}

double score_out_from_logit(double z) {
  require(std::isfinite(z), ErrorCode::kNonFinite, "score_out: non-finite logit");
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double score_arc(const Embedding& x, const ArcFaceHead& head, int claimed_class) {
  require(claimed_class >= 0 && claimed_class < head.classes(), ErrorCode::kNotFound,
          "score_arc: unknown class " + std::to_string(claimed_class));
  const Eigen::VectorXd z = arcface_logits(x, head);
  const double mx = z.maxCoeff();
  return std::log((z.array() - mx).exp().sum()) + mx - z(claimed_class);
}

ScoreTriple raw_scores(const Embedding& x, const TypeHead& type_head, const ArcFaceHead& arcface,
                       int claimed_class, const GroupStatistics& stats) {
  ScoreTriple s;
  s.out = score_out_from_logit(type_head.logit(x));
  s.arc = score_arc(x, arcface, claimed_class);
  s.maha = mahalanobis_score(x, stats);
  return s;
}

const Standardizer& StandardizationParams::at(const GroupKey& key, ScoreKind kind) const {
  const auto it = groups.find(key);
  require(it != groups.end(), ErrorCode::kNotFound, "no standardization parameters for " + key_name(key));
  return it->second[static_cast<std::size_t>(kind)];
}

StandardizationParams fit_standardization(const std::map<GroupKey, std::vector<ScoreTriple>>& training_scores,
                                          const ScorerConfig& cfg) {
  StandardizationParams out;
  for (const auto& [key, scores] : training_scores) {
    require(scores.size() >= 2, ErrorCode::kInvalidArgument,
            key_name(key) + ": standardization needs at least 2 training scores");
    std::array<Standardizer, 3> params;
    for (ScoreKind kind : kScoreKinds) {
      double mean = 0.0;
      for (const ScoreTriple& s : scores) mean += s.get(kind);
      mean /= static_cast<double>(scores.size());
      double ss = 0.0;
      for (const ScoreTriple& s : scores) ss += (s.get(kind) - mean) * (s.get(kind) - mean);
      const double sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
      params[static_cast<std::size_t>(kind)] = {mean, std::max(sd, cfg.std_floor)};
    }
    out.groups.emplace(key, params);
  }
  return out;
}

double standardize(double score, const Standardizer& p) { return (score - p.mean) / p.std; }

double standardize(double score, const StandardizationParams& params, const GroupKey& key, ScoreKind kind) {
  return standardize(score, params.at(key, kind));
}

ScoreTriple standardize(const ScoreTriple& raw, const StandardizationParams& params, const GroupKey& key) {
  ScoreTriple z;
  for (ScoreKind kind : kScoreKinds) z.get(kind) = standardize(raw.get(kind), params, key, kind);
  return z;
}

std::string combination_name(const CombinationSpec& spec) {
  std::string out;
  for (ScoreKind k : spec) {
    if (!out.empty()) out += '+';
    out += score_kind_name(k);
  }
  return out;
}

CombinationSpec parse_combination(const std::string& text) {
  CombinationSpec spec;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    spec.push_back(parse_score_kind(text.substr(start, end - start)));
    start = end + 1;
  }
  std::sort(spec.begin(), spec.end());
  require(std::adjacent_find(spec.begin(), spec.end()) == spec.end(), ErrorCode::kInvalidArgument,
          "duplicate score kind in combination '" + text + "'");
  return spec;
}

std::vector<CombinationSpec> all_combinations() {
  std::vector<CombinationSpec> out;
  for (unsigned mask = 1; mask < 8; ++mask) {
    CombinationSpec s;
    for (ScoreKind k : kScoreKinds) {
      if (mask & (1u << static_cast<unsigned>(k))) s.push_back(k);
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const CombinationSpec& a, const CombinationSpec& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  return out;
}

CombinationSpec select_combination(const std::optional<ValidationSet>& validation) {
  const std::vector<CombinationSpec> candidates = all_combinations();
  if (!validation || validation->standardized.empty()) return candidates.front();
  const ValidationSet& v = *validation;
  require(v.labels.size() == v.standardized.size() && v.groups.size() == v.standardized.size(),
          ErrorCode::kShapeMismatch, "validation set: scores, labels, and groups differ in length");

  std::map<GroupKey, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < v.groups.size(); ++i) members[v.groups[i]].push_back(i);

  CombinationSpec best = candidates.front();
  double best_auc = -1.0;
  for (const CombinationSpec& spec : candidates) {
    double sum = 0.0;
    int used = 0;
    for (const auto& [key, idx] : members) {
      std::vector<double> s;
      std::vector<int> y;
      for (std::size_t i : idx) {
        s.push_back(combined_score(v.standardized[i], spec));
        y.push_back(v.labels[i]);
      }
      const int pos = static_cast<int>(std::count(y.begin(), y.end(), 1));
      if (pos == 0 || pos == static_cast<int>(y.size())) continue;
      sum += compute_auc(s, y);
      ++used;
    }
    if (used == 0) return candidates.front();
    const double auc = sum / used;
    // Candidates arrive in tie-break order, so only a strict improvement replaces.
    if (auc > best_auc) {
      best_auc = auc;
      best = spec;
    }
  }
  return best;
}

double combined_score(const ScoreTriple& z, const CombinationSpec& spec) {
  require(!spec.empty(), ErrorCode::kInvalidArgument, "empty score combination");
  double total = 0.0;
  for (ScoreKind k : spec) total += z.get(k);
  return total;
}

}  // namespace mtlasd
