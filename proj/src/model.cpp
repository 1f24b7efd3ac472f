// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/model.hpp"

#include <algorithm>
#include <random>

#include "mtlasd/error.hpp"

namespace mtlasd {

Model Model::create(const Config& config, const std::string& target_type, std::vector<int> machine_ids,
                    std::uint64_t seed) {
  config.validate();
  require(!target_type.empty(), ErrorCode::kInvalidArgument, "model needs a target machine type");
  require(!machine_ids.empty(), ErrorCode::kInvalidArgument, "model needs at least one machine id");
  std::sort(machine_ids.begin(), machine_ids.end());
  require(std::adjacent_find(machine_ids.begin(), machine_ids.end()) == machine_ids.end(),
          ErrorCode::kInvalidArgument, "duplicate machine id");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1417u};
  std::mt19937_64 rng(seq);
  Model m;
  m.config = config;
  m.target_type = target_type;
  m.machine_ids = std::move(machine_ids);
  m.encoder = Encoder(config.encoder, rng);
  const int dim = config.encoder.pooled_dim;
  m.arcface = ArcFaceHead(static_cast<int>(m.machine_ids.size()), dim, config.heads.arc_scale,
                          config.heads.arc_margin, rng);
  m.type_head = TypeHead(dim, rng);
  m.aug_head = AugHead(config.heads.aug_classes, dim, rng);
  m.parameters();  // assigns names
  return m;
}

int Model::class_of(int machine_id) const {
  const auto it = std::lower_bound(machine_ids.begin(), machine_ids.end(), machine_id);
  require(it != machine_ids.end() && *it == machine_id, ErrorCode::kNotFound,
          "machine id " + std::to_string(machine_id) + " is not known to the " + target_type + " model");
  return static_cast<int>(it - machine_ids.begin());
}

std::vector<nn::Parameter*> Model::parameters() {
  std::vector<nn::Parameter*> out;
  encoder.parameters(out);
  arcface.anchors.name = "head.arcface.anchors";
  out.push_back(&arcface.anchors);
  for (nn::Parameter* p : type_parameters()) out.push_back(p);
  aug_head.weight.name = "head.aug.weight";
  aug_head.bias.name = "head.aug.bias";
  out.push_back(&aug_head.weight);
  out.push_back(&aug_head.bias);
  return out;
}

std::vector<nn::Parameter*> Model::type_parameters() {
  type_head.weight.name = "head.type.weight";
  type_head.bias.name = "head.type.bias";
  return {&type_head.weight, &type_head.bias};
}

}  // namespace mtlasd
