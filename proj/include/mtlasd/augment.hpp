// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "mtlasd/audio.hpp"
#include "mtlasd/config.hpp"

namespace mtlasd {

/// The numeric values are the augmentation class labels predicted by the
/// auxiliary head; they are part of the checkpoint format.
enum class AugmentKind : int {
  kNone = 0,
  kPitchShift = 1,
  kTimeShift = 2,
  kTimeStretch = 3,
  kFadeIn = 4,
  kFadeOut = 5,
  kWhiteNoise = 6,
  kTimeMask = 7,
  kFreqMask = 8,
};

inline constexpr int kNumAugmentKinds = 9;

const char* augment_kind_name(AugmentKind k);

struct AugmentationSpec {
  AugmentKind kind = AugmentKind::kNone;
  // Meaning depends on kind: semitones, shift seconds, stretch rate, fade
  // fraction of the clip, noise SNR in dB, or mask width (frames / bins).
  double value = 0.0;
  // Mask placement in [0, 1]; unused by waveform kinds.
  double position = 0.0;
  // Seeds the noise draw of white_noise.
  std::uint64_t rng_seed = 0;

  int id() const { return static_cast<int>(kind); }
  bool operator==(const AugmentationSpec&) const = default;
};

struct AugmentStats {
  std::size_t clipped = 0;  // samples clamped back into [-1, 1]
};

/// Returns a relabeled copy with the same sample count. Mask kinds leave the
/// waveform untouched and append a SpectralMask executed by compute_log_mel.
/// Throws if `spec.value` falls outside the configured range for its kind.
AudioClip apply_augmentation(const AudioClip& clip, const AugmentationSpec& spec,
                             const AugmentConfig& cfg, AugmentStats* stats = nullptr);

/// Draws one augmentation uniformly over the allowed kinds; parameters uniform over
/// the configured ranges.
AugmentationSpec sample_augmentation(std::mt19937_64& rng, const AugmentConfig& cfg);

/// Waveform-similarity overlap-add time-scale change: output length is about len / rate, pitch unchanged.
std::vector<double> ola_time_stretch(const std::vector<double>& x, double rate);

}  // namespace mtlasd
