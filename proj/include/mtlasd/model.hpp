// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtlasd/config.hpp"
#include "mtlasd/encoder.hpp"
#include "mtlasd/heads.hpp"

namespace mtlasd {

/// Encoder plus the three heads for one target machine type.
struct Model {
  Config config;
  std::string target_type;
  std::vector<int> machine_ids;  // ArcFace class index -> machine id, ascending
  Encoder encoder;
  ArcFaceHead arcface;
  TypeHead type_head;
  AugHead aug_head;

  static Model create(const Config& config, const std::string& target_type, std::vector<int> machine_ids,
                      std::uint64_t seed);

  /// Class index of `machine_id`; errors on an unknown id.
  int class_of(int machine_id) const;

  /// Every tensor, trainable or not, with unique names.
  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> type_parameters();
};

}  // namespace mtlasd
