// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtlasd/checkpoint.hpp"
#include "mtlasd/manifest.hpp"
#include "mtlasd/metrics.hpp"
#include "mtlasd/model.hpp"
#include "mtlasd/scorer.hpp"
#include "mtlasd/trainer.hpp"

namespace mtlasd {

/// `path` may be a manifest CSV, a directory holding manifest.csv, or a mimii tree.
DatasetManifest open_dataset(const std::string& path, const std::string& layout = "auto");

/// Eval-mode embeddings, one row per spectrogram, computed in chunks.
Eigen::MatrixXd embed_spectrograms(Model& model, const std::vector<const LogMelSpectrogram*>& specs,
                                   std::size_t chunk = 16);

/// Builds and trains a fresh model (or continues `resume`) for `target_type`.
Checkpoint train_model(const TrainingSet& data, const Config& config, const TrainOptions& options = {},
                       const std::optional<Checkpoint>& resume = std::nullopt);

/// Per-ID statistics and standardization from the target type's training normals.
/// With a validation set (labeled clips of the target type), the score
/// combination maximizing validation AUC is chosen; otherwise all three scores.
ScorerState fit_scorer(Model& model, const TrainingSet& data, const ScorerConfig& cfg = {},
                       const std::vector<AudioClip>& validation = {});

/// Raw scores plus combined score of each clip; clips must belong to the model's type.
std::vector<ScoreRow> score_clips(Model& model, const ScorerState& scorer, const std::vector<AudioClip>& clips,
                                  const std::vector<std::string>& paths);

/// Loads target-type clips of `split` (every condition) from the manifest.
std::vector<AudioClip> load_clips(const DatasetManifest& manifest, Split split, const std::string& type,
                                  std::vector<std::string>* paths = nullptr);

std::vector<LabeledClip> labeled_test_clips(const DatasetManifest& manifest, const std::string& type = {});

}  // namespace mtlasd
