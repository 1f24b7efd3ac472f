// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtlasd/audio.hpp"

namespace mtlasd {

enum class Split { kTrain, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string path;
  std::string machine_type;
  int machine_id = 0;
  Condition condition = Condition::kNormal;
  Split split = Split::kTrain;

  bool operator==(const ManifestEntry&) const = default;
  bool operator<(const ManifestEntry& o) const { return path < o.path; }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::optional<std::string> snr_tag;  // "-6dB", "0dB" or "6dB"
  int skipped = 0;                     // unparsable files or directories
  std::vector<std::string> warnings;

  std::vector<std::string> machine_types() const;
  std::vector<int> machine_ids(const std::string& type) const;
  std::size_t count(Split split, Condition cond) const;

  /// Entries of `type` (any type when empty) in `split`.
  std::vector<ManifestEntry> select(Split split, const std::string& type = {}) const;

  /// Sorts by path. Throws if a train entry is not normal or a test
  /// (type, id) pair has no training data.
  void validate() const;
};

enum class ManifestLayout { kMimii, kFlatCsv };

ManifestLayout parse_layout(const std::string& s);

/// Normals of each (type, id) held out for testing under the `mimii` layout:
/// as many as there are anomalies, while keeping at least two for training.
int mimii_test_normal_count(int num_normal, int num_anomalous);

/// `mimii`: <root>/<type>/id_XX/{normal,abnormal}/*.wav.
/// `flat_csv`: <root>/manifest.csv with columns path,machine_type,machine_id,condition,split.
DatasetManifest load_manifest(const std::string& root_dir, ManifestLayout layout);

/// Paths are written relative to the CSV's directory when they lie under it.
void write_manifest_csv(const DatasetManifest& manifest, const std::string& csv_path);
DatasetManifest read_manifest_csv(const std::string& csv_path);

}  // namespace mtlasd
