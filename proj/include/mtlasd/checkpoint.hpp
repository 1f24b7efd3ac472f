// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlasd/model.hpp"
#include "mtlasd/nn/adam.hpp"
#include "mtlasd/scorer.hpp"

namespace mtlasd {

/// One epoch of the training log: `epoch,stage,l_type,l_id,l_aug,total`.
struct LossLogRow {
  int epoch = 0;  // 1-based within the stage
  int stage = 1;
  double l_type = 0.0;
  double l_id = 0.0;
  double l_aug = 0.0;
  double total = 0.0;

  bool operator==(const LossLogRow&) const = default;
};

std::string format_log_row(const LossLogRow& row);
inline constexpr const char* kLossLogHeader = "epoch,stage,l_type,l_id,l_aug,total";

/// Progress marker. Epoch RNG streams derive from (seed, stage, epoch), so this
/// is the whole random state needed to resume.
struct TrainState {
  int stage = 1;           // stage the next epoch belongs to; 3 once training finished
  int next_epoch = 1;      // 1-based epoch within `stage`
  std::uint64_t seed = 0;
};

struct AdamState {
  long steps = 0;
  std::map<std::string, nn::Adam::Moments> moments;
};

struct Checkpoint {
  Model model;
  TrainState train;
  std::optional<AdamState> optimizer;
  std::vector<LossLogRow> log;
  std::optional<ScorerState> scorer;
};

inline constexpr int kCheckpointVersion = 1;

/// Writes atomically: a sibling temp file is renamed over `path`.
void save_checkpoint(const std::string& path, Checkpoint& ckpt);
/// Validates the format tag, version, and every tensor shape against the stored config.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mtlasd
