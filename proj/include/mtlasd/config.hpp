// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mtlasd {

/// Flat `key = value` document; `#` starts a comment. `key: value` is accepted too.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values_file(const std::string& path);
std::string format_key_values(const KeyValues& kv);

struct FrontendConfig {
  int sample_rate = 16000;
  int fft_size = 1024;
  int hop = 512;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
  bool center = true;
  // Per-spectrogram mean/variance normalization; off feeds raw log-Mel energies.
  bool normalize = false;

  void validate() const;
};

struct AugmentConfig {
  double pitch_semitones = 2.0;
  double time_shift_max_s = 1.0;
  double stretch_min = 0.9;
  double stretch_max = 1.1;
  double fade_min_frac = 0.1;
  double fade_max_frac = 0.5;
  double noise_snr_min_db = 6.0;
  double noise_snr_max_db = 20.0;
  int time_mask_max = 32;
  int freq_mask_max = 16;
  // Ids drawn by the sampler; empty means all nine kinds.
  std::vector<int> kinds;
  bool enabled = true;
  bool feeds_primary_losses = true;

  void validate() const;
};

enum class ConvNorm { kBatch, kLayer };

struct EncoderConfig {
  int input_dim = 128;
  int n_blocks = 3;
  int model_dim = 128;
  int ffn_units = 512;
  int attention_heads = 4;
  int conv_kernel = 7;
  int pooled_dim = 64;
  int pool_attention_dim = 128;
  double dropout = 0.1;
  ConvNorm conv_norm = ConvNorm::kBatch;
  bool positional_encoding = false;

  void validate() const;
};

enum class Reduction { kSum, kMean };

struct HeadConfig {
  double arc_scale = 16.0;
  double arc_margin = 1.28;  // radians
  int aug_classes = 9;
  double alpha = 1.0;
  double beta = 1.0;
  Reduction reduction = Reduction::kSum;
  bool aug_in_stage1 = true;

  void validate() const;
};

struct TrainConfig {
  int stage1_epochs = 80;
  int stage2_epochs = 40;
  int batch_size = 28;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::string target_machine_type;
  bool reset_optimizer_between_stages = true;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  int checkpoint_every = 0;     // epochs; 0 writes only at stage ends

  void validate() const;
};

struct ScorerConfig {
  double cov_reg_rel = 1e-3;
  double cov_reg_floor = 1e-6;
  double std_floor = 1e-12;
};

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  std::uint64_t seed = 0;
};

struct Config {
  FrontendConfig frontend;
  AugmentConfig augment;
  EncoderConfig encoder;
  HeadConfig heads;
  TrainConfig train;
  ScorerConfig scorer;
  TsneConfig tsne;

  /// Full-size architecture and 80 + 40 epoch schedule.
  static Config full();
  /// One conformer block at width 16; what the desk-scale checks train.
  static Config tiny();
  static Config preset(const std::string& name);

  /// Overrides fields from `kv`; unknown keys are an error.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  void validate() const;
};

}  // namespace mtlasd
