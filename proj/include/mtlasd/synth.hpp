// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtlasd/audio.hpp"
#include "mtlasd/manifest.hpp"

namespace mtlasd {

enum class AnomalyMode { kDetune, kTransientBursts, kHarmonicDropout };

struct SynthMachine {
  std::string name;
  std::vector<double> id_fundamentals_hz;  // one tonal signature per machine ID
  double harmonic_decay = 1.0;             // harmonic h has amplitude h^-decay
  double odd_harmonic_gain = 1.0;          // extra gain on odd harmonics (h >= 3)
  double noise_lowpass = 0.0;              // one-pole coefficient in [0,1); 0 is white
};

struct SynthConfig {
  std::vector<SynthMachine> machines;
  int normal_per_id = 20;
  int anomalous_per_id = 10;
  double duration_s = 10.0;
  int sample_rate = 16000;
  double snr_db = 6.0;
  double detune_min = 0.08;  // relative frequency shift of detuned anomalies
  double detune_max = 0.15;
  std::vector<AnomalyMode> anomaly_modes = {AnomalyMode::kDetune, AnomalyMode::kTransientBursts,
                                            AnomalyMode::kHarmonicDropout};
  int n_mels = 128;  // resolution used for the fundamental-separation check
  double fmax = 8000.0;

  /// Two machine types with two IDs each.
  static SynthConfig toy();
  /// Throws if fundamentals of one type sit closer than three Mel bins.
  void validate() const;
};

/// Renders one clip; the same arguments always produce the same samples.
AudioClip synth_clip(const SynthConfig& cfg, std::size_t machine_index, int machine_id, bool anomalous,
                     int clip_index, std::uint64_t seed);

/// Writes <out_dir>/<type>/id_XX/{normal,abnormal}/*.wav plus <out_dir>/manifest.csv.
/// Train/test splits follow the `mimii` layout policy.
DatasetManifest synth_corpus(const SynthConfig& cfg, std::uint64_t seed, const std::string& out_dir);

}  // namespace mtlasd
