// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mtlasd {

/// Mann-Whitney AUC: P(anomalous score > normal score) with ties counted half.
/// labels: 1 = anomalous, 0 = normal. Both classes must be present.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// One row of a score CSV.
struct ScoreRow {
  std::string path;
  std::string machine_type;
  int machine_id = 0;
  double a_out = 0.0;
  double a_arc = 0.0;
  double a_maha = 0.0;
  double combined = 0.0;
};

inline const std::vector<std::string>& report_kinds() {
  static const std::vector<std::string> kinds = {"out", "arc", "maha", "combined"};
  return kinds;
}

std::vector<ScoreRow> read_score_csv(const std::string& path);
void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows);

struct EvalReport {
  struct IdRow {
    std::string machine_type;
    int machine_id = 0;
    std::map<std::string, double> auc;  // by kind; a missing kind is absent, not zero
  };
  std::vector<IdRow> ids;                                             // sorted by (type, id)
  std::map<std::string, std::map<std::string, double>> type_mean;     // type -> kind -> mean AUC
  std::map<std::string, double> overall;                              // kind -> mean over types
  std::vector<std::string> kinds;                                     // column order
  std::optional<std::string> snr_tag;

  /// Aligned text table in percent, one line per ID plus per-type and overall averages.
  std::string render_table() const;
  /// `machine_type,machine_id,kind,auc`; aggregate rows use id `mean` (per type) and type `all`.
  std::string render_csv() const;
};

/// Condition label and claimed identity for each scored path.
struct LabeledClip {
  std::string path;
  std::string machine_type;
  int machine_id = 0;
  int anomalous = 0;
};

/// Per-ID AUCs for every kind in `kinds`. Every clip in `clips` must have a score
/// row; the error lists missing paths. IDs with a single class are skipped.
/// Type means weight IDs equally; overall is the mean of the type means.
EvalReport build_report(const std::vector<ScoreRow>& scores, const std::vector<LabeledClip>& clips,
                        const std::vector<std::string>& kinds = report_kinds());

}  // namespace mtlasd
