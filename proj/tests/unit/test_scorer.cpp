// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mtlasd/error.hpp"
#include "mtlasd/metrics.hpp"
#include "mtlasd/scorer.hpp"
#include "test_util.hpp"

using namespace mtlasd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using mtlasd::test::random_matrix;

namespace {

// Random symmetric positive definite d x d matrix with a spread of eigenvalues.
MatrixXd random_spd(int d, std::mt19937_64& rng) {
  const MatrixXd a = random_matrix(d, d, rng);
  return a * a.transpose() + 0.1 * MatrixXd::Identity(d, d);
}

GroupStatistics stats_from(const VectorXd& mean, const MatrixXd& cov) {
  GroupStatistics s;
  s.mean = mean;
  s.covariance = cov;
  s.count = 2;
  s.factorize();
  return s;
}

double explicit_inverse_distance(const VectorXd& x, const VectorXd& mu, const MatrixXd& cov) {
  const VectorXd r = x - mu;
  return std::sqrt(r.dot(cov.inverse() * r));
}

ScoreTriple triple(double arc, double maha, double out) {
  ScoreTriple t;
  t.arc = arc;
  t.maha = maha;
  t.out = out;
  return t;
}

ValidationSet one_group(const std::vector<ScoreTriple>& z, const std::vector<int>& y) {
  ValidationSet v;
  v.standardized = z;
  v.labels = y;
  v.groups.assign(z.size(), GroupKey{"fan", 0});
  return v;
}

}  // namespace

TEST_SUITE("scorer") {

TEST_CASE("normal statistics examples") {
  const MatrixXd same = VectorXd::LinSpaced(4, 1.0, 4.0).transpose().replicate(5, 1);
  const GroupStatistics s = fit_group_statistics(same);
  CHECK((s.mean - same.row(0).transpose()).norm() == 0.0);
  CHECK(s.epsilon == 1e-6);
  CHECK((s.covariance - 1e-6 * MatrixXd::Identity(4, 4)).norm() < 1e-18);

  MatrixXd toy(2, 2);
  toy << 0, 0, 2, 0;
  const GroupStatistics t = fit_group_statistics(toy);
  CHECK(t.mean(0) == 1.0);
  CHECK(t.mean(1) == 0.0);
  CHECK(t.epsilon == doctest::Approx(1e-3 * 2.0 / 2.0));
  CHECK(t.covariance(0, 0) == doctest::Approx(2.0 + t.epsilon).epsilon(1e-15));
  CHECK(t.covariance(1, 1) == doctest::Approx(t.epsilon).epsilon(1e-15));
  CHECK(t.count == 2);
}

TEST_CASE("mean and covariance match a two-pass oracle") {
  std::mt19937_64 rng(1);
  const MatrixXd x = random_matrix(100, 64, rng, 2.0);
  const GroupStatistics s = fit_group_statistics(x);
  VectorXd mean = VectorXd::Zero(64);
  for (int i = 0; i < 100; ++i) mean += x.row(i).transpose();
  mean /= 100.0;
  MatrixXd cov = MatrixXd::Zero(64, 64);
  for (int i = 0; i < 100; ++i) {
    const VectorXd r = x.row(i).transpose() - mean;
    cov += r * r.transpose();
  }
  cov /= 99.0;
  const double eps = std::max(1e-3 * cov.trace() / 64.0, 1e-6);
  cov += eps * MatrixXd::Identity(64, 64);
  CHECK((s.mean - mean).norm() < 1e-10);
  CHECK((s.covariance - cov).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(s.epsilon == doctest::Approx(eps).epsilon(1e-12));
}

TEST_CASE("groups with fewer than two samples are rejected by name") {
  std::map<GroupKey, MatrixXd> groups;
  groups[{"pump", 4}] = MatrixXd::Ones(1, 3);
  try {
    fit_normal_statistics(groups);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("pump") != std::string::npos);
    CHECK(std::string(e.what()).find('4') != std::string::npos);
  }
  NormalStatistics empty;
  CHECK_THROWS_AS(mahalanobis_score(VectorXd::Zero(3), empty, {"pump", 4}), Error);
}

TEST_CASE("mahalanobis examples") {
  const VectorXd mu = (VectorXd(2) << 0.5, -1.0).finished();
  const GroupStatistics id = stats_from(mu, MatrixXd::Identity(2, 2));
  CHECK(mahalanobis_score(mu, id) == 0.0);
  CHECK(mahalanobis_score(mu + VectorXd::Unit(2, 0), id) == doctest::Approx(1.0).epsilon(1e-15));
  MatrixXd diag = MatrixXd::Zero(2, 2);
  diag.diagonal() << 4.0, 1.0;
  const GroupStatistics d = stats_from(mu, diag);
  CHECK(mahalanobis_score(mu + (VectorXd(2) << 2.0, 1.0).finished(), d) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("mahalanobis matches an explicit inverse") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 16);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    const MatrixXd cov = random_spd(d, rng);
    const VectorXd mu = random_matrix(d, 1, rng), x = random_matrix(d, 1, rng, 3.0);
    const double expect = explicit_inverse_distance(x, mu, cov);
    CHECK(std::abs(mahalanobis_score(x, stats_from(mu, cov)) - expect) <= 1e-8 * expect);
  }
}

TEST_CASE("mahalanobis is invariant under affine changes of basis") {
  std::mt19937_64 rng(3);
  const int d = 64;
  const GroupStatistics base = fit_group_statistics(random_matrix(200, d, rng));
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd a = random_matrix(d, d, rng);
    a += 4.0 * MatrixXd::Identity(d, d);  // keep it comfortably invertible
    const VectorXd b = random_matrix(d, 1, rng);
    const GroupStatistics moved = stats_from(a * base.mean + b, a * base.covariance * a.transpose());
    for (int i = 0; i < 10; ++i) {
      const VectorXd x = random_matrix(d, 1, rng);
      const double ref = mahalanobis_score(x, base);
      CHECK(std::abs(mahalanobis_score(a * x + b, moved) - ref) <= 1e-8 * ref);
    }
  }
}

TEST_CASE("out score examples") {
  CHECK(score_out(1.0 - 1e-12) < 1e-11);
  CHECK(score_out(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(score_out(0.1) == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  CHECK(score_out_from_logit(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(score_out_from_logit(std::log(0.1 / 0.9)) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  // Logits whose probabilities round to 1 keep distinct, ordered scores.
  CHECK(score_out_from_logit(40.0) > score_out_from_logit(41.0));
  CHECK(score_out_from_logit(41.0) > 0.0);
  CHECK(score_out_from_logit(-800.0) == doctest::Approx(800.0));
}

TEST_CASE("arc score examples") {
  ArcFaceHead head;
  head.anchors = nn::Parameter("a", MatrixXd::Identity(2, 3));
  head.scale = 16.0;
  head.margin = 1.28;
  const VectorXd e1 = VectorXd::Unit(3, 0);
  CHECK(score_arc(e1, head, 0) == doctest::Approx(-std::log(std::exp(16.0) / (std::exp(16.0) + 1.0))).epsilon(1e-5));
  CHECK(score_arc(e1, head, 0) == doctest::Approx(1.1e-7).epsilon(0.05));
  CHECK(score_arc(e1, head, 1) == doctest::Approx(16.0).epsilon(1e-6));
  ArcFaceHead four;
  four.anchors = nn::Parameter("a", MatrixXd::Identity(4, 5));
  four.scale = 16.0;
  CHECK(score_arc(VectorXd::Unit(5, 4), four, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK_THROWS_AS(score_arc(e1, head, 2), Error);
  CHECK_THROWS_AS(score_arc(e1, head, -1), Error);
}

TEST_CASE("standardization examples") {
  std::map<GroupKey, std::vector<ScoreTriple>> train;
  train[{"fan", 0}] = {triple(1, 7, 5), triple(2, 7, 5), triple(3, 7, 5)};
  const StandardizationParams p = fit_standardization(train);
  CHECK(p.at({"fan", 0}, ScoreKind::kArc).std == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(standardize(2.0, p, {"fan", 0}, ScoreKind::kArc) == 0.0);
  CHECK(standardize(3.0, p, {"fan", 0}, ScoreKind::kArc) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.at({"fan", 0}, ScoreKind::kMaha).std == 1e-12);
  const double z = standardize(7.5, p, {"fan", 0}, ScoreKind::kMaha);
  CHECK(std::isfinite(z));
  CHECK(standardize(7.0, p, {"fan", 0}, ScoreKind::kMaha) == 0.0);
  CHECK_THROWS_AS(standardize(1.0, p, {"fan", 1}, ScoreKind::kArc), Error);
}

TEST_CASE("standardized training scores have zero mean and unit variance") {
  std::mt19937_64 rng(4);
  std::map<GroupKey, std::vector<ScoreTriple>> train;
  std::lognormal_distribution<double> ln(0.0, 2.0);
  for (int id = 0; id < 4; ++id) {
    const int n = 5 + 20 * id;
    for (int i = 0; i < n; ++i) train[{"valve", id}].push_back(triple(ln(rng) * 1e3, ln(rng), -ln(rng) * 1e-3));
  }
  const StandardizationParams p = fit_standardization(train);
  for (const auto& [key, rows] : train) {
    for (ScoreKind k : kScoreKinds) {
      double mean = 0.0;
      for (const ScoreTriple& r : rows) mean += standardize(r.get(k), p, key, k);
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const ScoreTriple& r : rows) var += std::pow(standardize(r.get(k), p, key, k) - mean, 2);
      var /= static_cast<double>(rows.size() - 1);
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("positive rescaling of raw scores leaves standardized scores unchanged") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(1.0, 0.3);
  std::map<GroupKey, std::vector<ScoreTriple>> train, scaled;
  std::vector<ScoreTriple> test;
  for (int i = 0; i < 30; ++i) train[{"fan", 0}].push_back(triple(n(rng), n(rng), n(rng)));
  for (int i = 0; i < 10; ++i) test.push_back(triple(n(rng), n(rng), n(rng)));
  for (const ScoreTriple& t : train[{"fan", 0}]) scaled[{"fan", 0}].push_back(triple(7.5 * t.arc, 7.5 * t.maha, 7.5 * t.out));
  const StandardizationParams a = fit_standardization(train), b = fit_standardization(scaled);
  for (const ScoreTriple& t : test) {
    const ScoreTriple za = standardize(t, a, {"fan", 0});
    const ScoreTriple zb = standardize(triple(7.5 * t.arc, 7.5 * t.maha, 7.5 * t.out), b, {"fan", 0});
    for (ScoreKind k : kScoreKinds) CHECK(zb.get(k) == doctest::Approx(za.get(k)).epsilon(1e-12));
  }
}

TEST_CASE("combination selection") {
  CHECK(combination_name(select_combination(std::nullopt)) == "arc+maha+out");
  const std::vector<CombinationSpec> all = all_combinations();
  REQUIRE(all.size() == 7);
  CHECK(combination_name(all[0]) == "arc+maha+out");
  CHECK(combination_name(all[1]) == "arc+maha");
  CHECK(combination_name(all[3]) == "maha+out");
  CHECK(combination_name(all[4]) == "arc");
  CHECK(combination_name(all[6]) == "out");

  // Only maha separates; arc and out are rank-neutral (AUC 1/2) but large enough to spoil any pairing.
  const std::vector<double> maha = {0.1, 0.4, 0.2, 0.9, 1.3, 1.1};
  const std::vector<double> arc = {0.0, 5.0, 0.0, 5.0, 0.0, 0.0};
  const std::vector<double> out = {5.0, 0.0, 0.0, 0.0, 0.0, 5.0};
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  CHECK(compute_auc(arc, y) == 0.5);
  CHECK(compute_auc(out, y) == 0.5);
  std::vector<ScoreTriple> only_maha;
  for (std::size_t i = 0; i < maha.size(); ++i) only_maha.push_back(triple(arc[i], maha[i], out[i]));
  CHECK(combination_name(select_combination(one_group(only_maha, y))) == "maha");

  // Imperfect separator (AUC 8/9) in out; arc and maha each subtract half of it.
  const std::vector<double> w = {0.1, 0.5, 0.2, 0.3, 1.0, 1.2};
  std::vector<ScoreTriple> tied;
  for (double s : w) tied.push_back(triple(-0.5 * s, -0.5 * s, s));
  CHECK(compute_auc(w, y) == doctest::Approx(8.0 / 9.0));
  // {out}, {arc,out}, {maha,out} tie at 8/9; the full set is constant 0; pairs beat singles,
  // and arc precedes maha.
  CHECK(combination_name(select_combination(one_group(tied, y))) == "arc+out");
}

TEST_CASE("selection agrees with a brute-force search on random fixtures") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> small(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    ValidationSet v;
    for (int g = 0; g < 2; ++g) {
      for (int i = 0; i < 8; ++i) {
        v.standardized.push_back(triple(small(rng), small(rng), small(rng)));
        v.labels.push_back(i % 2);
        v.groups.push_back({"fan", g});
      }
    }
    // Oracle: mean per-group AUC; keep the first maximum in (size desc, lexicographic) order.
    std::vector<std::pair<CombinationSpec, double>> scored;
    for (int mask = 1; mask < 8; ++mask) {
      CombinationSpec spec;
      for (int k = 0; k < 3; ++k) {
        if (mask & (1 << k)) spec.push_back(kScoreKinds[k]);
      }
      double sum = 0.0;
      for (int g = 0; g < 2; ++g) {
        std::vector<double> s;
        std::vector<int> y;
        for (std::size_t i = 0; i < v.groups.size(); ++i) {
          if (v.groups[i].second != g) continue;
          double c = 0.0;
          for (ScoreKind k : spec) c += v.standardized[i].get(k);
          s.push_back(c);
          y.push_back(v.labels[i]);
        }
        sum += compute_auc(s, y);
      }
      scored.push_back({spec, sum / 2.0});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
      return a.first < b.first;
    });
    const auto best = std::max_element(scored.begin(), scored.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    CHECK(select_combination(v) == best->first);
    CHECK(!select_combination(v).empty());
  }
}

TEST_CASE("combined score examples") {
  CHECK(combined_score(triple(0.0, 2.5, 0.0), {ScoreKind::kMaha}) == 2.5);
  CHECK(combined_score(triple(-0.5, 2.0, 1.0), all_combinations().front()) == 2.5);
  CHECK(combined_score(triple(1.0, 2.0, 3.0), {ScoreKind::kArc, ScoreKind::kOut}) == 4.0);
  CHECK(combined_score(triple(1.0, 2.1, 3.0), {ScoreKind::kMaha, ScoreKind::kOut}) >
        combined_score(triple(1.0, 2.0, 3.0), {ScoreKind::kMaha, ScoreKind::kOut}));
  CHECK_THROWS_AS(combined_score(triple(0, 0, 0), {}), Error);
  CHECK(parse_combination("out+arc") == CombinationSpec{ScoreKind::kArc, ScoreKind::kOut});
  CHECK_THROWS_AS(parse_combination("bogus"), Error);
}

}
