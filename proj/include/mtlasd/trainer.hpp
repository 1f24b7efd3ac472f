// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtlasd/augment.hpp"
#include "mtlasd/checkpoint.hpp"
#include "mtlasd/frontend.hpp"
#include "mtlasd/manifest.hpp"
#include "mtlasd/model.hpp"
#include "mtlasd/nn/adam.hpp"

namespace mtlasd {

/// A training clip with its cached unaugmented spectrogram.
struct TrainingSample {
  AudioClip clip;
  LogMelSpectrogram base;
  int class_index = -1;  // ArcFace class for target-type clips, -1 for other machine types
};

struct TrainingSet {
  std::string target_type;
  std::vector<int> machine_ids;  // ascending; class index order
  std::vector<TrainingSample> samples;
};

/// Target-type normals become ID samples; other types' normals become the pseudo-anomaly pool.
TrainingSet make_training_set(std::vector<AudioClip> clips, const std::string& target_type,
                              const FrontendConfig& frontend);
/// Loads the train split of `manifest`.
TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& target_type,
                              const FrontendConfig& frontend);

/// Sample indices grouped for batch composition.
struct BatchPool {
  std::vector<std::vector<int>> by_class;  // target-type normals per ArcFace class
  std::vector<int> pseudo;                 // normals of all other machine types
};

BatchPool make_batch_pool(const TrainingSet& data);
/// Indices refer to `manifest.entries`; only train-split normals are used.
BatchPool make_batch_pool(const DatasetManifest& manifest, const std::string& target_type);

enum class SampleRole { kNormal, kPseudo };

struct BatchPlan {
  std::vector<int> indices;
  std::vector<SampleRole> roles;
  std::vector<int> classes;          // -1 for pseudo-anomalies
  std::vector<int> per_class_counts;  // normals per class

  int normal_count() const;
  int pseudo_count() const;
};

/// Empty when `plan` satisfies the balanced-batch invariants, else a description.
std::string batch_plan_violation(const BatchPlan& plan, const BatchPool& pool, int stage, int batch_size);

/// Emits balanced batches for one epoch. Per-class queues are shuffled once and
/// cycled; a remainder of normals/K goes to classes round-robin starting at an
/// offset that advances every batch. Stage-2 pseudo samples are drawn with replacement.
class BatchComposer {
 public:
  BatchComposer(const BatchPool& pool, int stage, int batch_size, std::mt19937_64& rng);

  int normals_per_batch() const;
  /// ceil(target-type normals / normals per batch).
  int batches_per_epoch() const;
  BatchPlan next(std::mt19937_64& rng);

 private:
  const BatchPool* pool_;
  int stage_;
  int batch_size_;
  std::vector<std::vector<int>> queues_;
  std::vector<std::size_t> cursors_;
  int offset_ = 0;
};

/// One batch from a fresh composer.
BatchPlan compose_batch(const BatchPool& pool, int stage, int batch_size, std::mt19937_64& rng);

/// Component losses of one batch, after reduction and before weighting.
struct StepLosses {
  double l_type = 0.0;
  double l_id = 0.0;
  double l_aug = 0.0;
  double total = 0.0;
  bool id_empty = false;
};

struct TrainOptions {
  int only_stage = 0;            // 0 runs what remains of both stages
  std::string checkpoint_path;   // empty disables checkpointing
  int max_epochs = -1;           // stop after this many epochs in this call; -1 = no limit
  std::function<void(const LossLogRow&)> on_epoch;
};

/// Two-stage trainer. Stage 1 freezes the type head and uses target-type normals;
/// stage 2 unfreezes it and mixes in pseudo-anomalies one-for-one.
class Trainer {
 public:
  Trainer(Model& model, const TrainingSet& data);

  /// Restores optimizer, progress, and log from a checkpoint of the same model.
  void resume(const Checkpoint& ckpt);

  /// Runs epochs until the requested stages finish or `max_epochs` is hit.
  /// Returns true when the requested stages are complete.
  bool run(const TrainOptions& options = {});

  /// One optimizer step on `plan`; `rng` drives augmentation and dropout.
  StepLosses step(const BatchPlan& plan, int stage, std::mt19937_64& rng);

  /// Eval-mode losses on unaugmented features; parameters are untouched.
  StepLosses evaluate(const BatchPlan& plan, int stage);

  const std::vector<LossLogRow>& log() const { return log_; }
  const TrainState& state() const { return state_; }
  const nn::Adam& optimizer() const { return adam_; }
  Checkpoint checkpoint() const;

  /// RNG stream for one epoch; depends only on (seed, stage, epoch).
  static std::mt19937_64 epoch_rng(std::uint64_t seed, int stage, int epoch);

 private:
  LogMelSpectrogram features(const TrainingSample& s, const AugmentationSpec& aug, std::size_t worker);
  StepLosses forward_backward(const BatchPlan& plan, int stage, std::mt19937_64* rng);
  void run_epoch(int stage, int epoch);

  Model* model_;
  const TrainingSet* data_;
  BatchPool pool_;
  nn::Adam adam_;
  TrainState state_;
  std::vector<LossLogRow> log_;
  std::vector<LogMelExtractor> extractors_;  // one per parallel_for worker
};

/// Stage 1 only, from the model's current weights.
std::vector<LossLogRow> train_stage1(Model& model, const TrainingSet& data, const TrainOptions& options = {});
/// Stage 2 only, from the model's current (stage-1) weights with a fresh optimizer.
std::vector<LossLogRow> train_stage2(Model& model, const TrainingSet& data, const TrainOptions& options = {});

}  // namespace mtlasd
