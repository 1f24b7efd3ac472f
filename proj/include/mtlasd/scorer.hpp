// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtlasd/config.hpp"
#include "mtlasd/heads.hpp"

namespace mtlasd {

/// Declaration order is the tie-break order for combinations.
enum class ScoreKind { kArc = 0, kMaha = 1, kOut = 2 };
inline constexpr std::array<ScoreKind, 3> kScoreKinds = {ScoreKind::kArc, ScoreKind::kMaha, ScoreKind::kOut};

const char* score_kind_name(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& name);

/// Raw or standardized scores of one clip; higher means more anomalous.
struct ScoreTriple {
  double out = 0.0;
  double arc = 0.0;
  double maha = 0.0;

  double get(ScoreKind kind) const;
  double& get(ScoreKind kind);
};

using GroupKey = std::pair<std::string, int>;  // (machine type, machine id)

/// Mean and regularized covariance of one group's training embeddings.
struct GroupStatistics {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // sample covariance (n - 1) plus epsilon * I
  double epsilon = 0.0;
  int count = 0;
  Eigen::LLT<Eigen::MatrixXd> factor;

  /// Recomputes the Cholesky factor of `covariance`; errors if it is not positive definite.
  void factorize();
};

struct NormalStatistics {
  std::map<GroupKey, GroupStatistics> groups;
  const GroupStatistics& at(const GroupKey& key) const;
};

/// Rows of `embeddings` are samples. Needs at least two rows.
GroupStatistics fit_group_statistics(const Eigen::MatrixXd& embeddings, const ScorerConfig& cfg = {},
                                     const std::string& group_name = "group");
NormalStatistics fit_normal_statistics(const std::map<GroupKey, Eigen::MatrixXd>& embeddings,
                                       const ScorerConfig& cfg = {});

/// sqrt((x - mu)^T Sigma^-1 (x - mu)) via the cached factor.
double mahalanobis_score(const Eigen::VectorXd& x, const GroupStatistics& stats);
double mahalanobis_score(const Eigen::VectorXd& x, const NormalStatistics& stats, const GroupKey& key);

/// -log p for the type head's target-type probability p.
double score_out(double target_probability);
/// Same score from the type head's logit z: log(1 + exp(-z)), exact when p rounds to 1.
double score_out_from_logit(double logit);
/// -log softmax(s cos theta)[claimed_class], margin-free.
double score_arc(const Embedding& x, const ArcFaceHead& head, int claimed_class);

/// All three raw scores of one embedding.
ScoreTriple raw_scores(const Embedding& x, const TypeHead& type_head, const ArcFaceHead& arcface,
                       int claimed_class, const GroupStatistics& stats);

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;  // already floored
};

struct StandardizationParams {
  std::map<GroupKey, std::array<Standardizer, 3>> groups;  // indexed by ScoreKind
  const Standardizer& at(const GroupKey& key, ScoreKind kind) const;
};

/// Per-group mean and n-1 standard deviation of each score kind, std floored.
StandardizationParams fit_standardization(const std::map<GroupKey, std::vector<ScoreTriple>>& training_scores,
                                          const ScorerConfig& cfg = {});

double standardize(double score, const Standardizer& params);
double standardize(double score, const StandardizationParams& params, const GroupKey& key, ScoreKind kind);
ScoreTriple standardize(const ScoreTriple& raw, const StandardizationParams& params, const GroupKey& key);

/// Nonempty subset of score kinds, sorted in ScoreKind order.
using CombinationSpec = std::vector<ScoreKind>;

std::string combination_name(const CombinationSpec& spec);
CombinationSpec parse_combination(const std::string& text);

/// Labeled standardized scores; AUCs are averaged over groups holding both classes.
struct ValidationSet {
  std::vector<ScoreTriple> standardized;
  std::vector<int> labels;  // 1 = anomalous
  std::vector<GroupKey> groups;
};

/// All seven subsets in tie-break order: larger first, then lexicographic.
std::vector<CombinationSpec> all_combinations();

/// Highest mean validation AUC, ties to the larger subset then lexicographic order;
/// without validation data, the full set.
CombinationSpec select_combination(const std::optional<ValidationSet>& validation);

double combined_score(const ScoreTriple& standardized, const CombinationSpec& spec);

/// Everything inference needs beyond the network: statistics, standardization, combination.
struct ScorerState {
  NormalStatistics statistics;
  StandardizationParams standardization;
  CombinationSpec combination;
  ScorerConfig config;
};

}  // namespace mtlasd
