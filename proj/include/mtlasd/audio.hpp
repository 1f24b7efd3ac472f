// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mtlasd {

enum class Condition { kNormal, kAnomalous, kUnknown };

const char* condition_name(Condition c);
Condition parse_condition(const std::string& s);

/// A contiguous band zeroed in the log-Mel output (set to log(log_floor)).
/// `position` in [0, 1] places the band: start = floor(position * (extent - width + 1)),
/// clamped so the band fits.
struct SpectralMask {
  enum class Axis { kTime, kFrequency };
  Axis axis = Axis::kTime;
  double position = 0.0;
  int width = 0;
};

struct AudioClip {
  std::vector<float> samples;  // mono PCM in [-1, 1]
  int sample_rate = 16000;
  std::string machine_type;
  int machine_id = 0;
  Condition condition = Condition::kUnknown;
  int augmentation_id = 0;
  // Spectral-domain augmentations deferred to compute_log_mel.
  std::vector<SpectralMask> masks;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Number of samples for `duration_s` seconds at `sample_rate`.
std::size_t expected_sample_count(int sample_rate, double duration_s);

/// Reads 8/16/24/32-bit integer or 32/64-bit float PCM; multi-channel input is
/// averaged to mono.
AudioClip read_wav(const std::string& path);

/// Writes 16-bit mono PCM. Samples are clamped to [-1, 1] and rounded to nearest.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

}  // namespace mtlasd
