// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "mtlasd/audio.hpp"
#include "mtlasd/config.hpp"

namespace mtlasd {

/// T x M log-Mel energies (rows are frames).
struct LogMelSpectrogram {
  Eigen::MatrixXd frames;
  int frame_hop = 512;
  int fft_size = 1024;
  double log_floor = 1e-10;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int num_bins() const { return static_cast<int>(frames.cols()); }
};

// HTK Mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Frame count of a centered (reflect-padded) or uncentered STFT.
int stft_frame_count(std::size_t num_samples, int fft_size, int hop, bool center);

/// Triangular Mel filterbank over the one-sided spectrum, stored sparsely.
class MelFilterbank {
 public:
  explicit MelFilterbank(const FrontendConfig& cfg);

  int num_bins() const { return static_cast<int>(filters_.size()); }
  /// lower edge, center, upper edge of filter `m` in Hz.
  double lower_hz(int m) const { return edges_hz_[m]; }
  double center_hz(int m) const { return edges_hz_[m + 1]; }
  double upper_hz(int m) const { return edges_hz_[m + 2]; }

  /// Applies the filterbank to a power spectrum of fft_size/2+1 bins.
  void apply(const double* power, double* out) const;

 private:
  struct Filter {
    int first_bin = 0;
    std::vector<double> weights;
  };
  std::vector<Filter> filters_;
  std::vector<double> edges_hz_;
};

/// Reusable extractor: owns the window, filterbank and FFT plan. A single
/// instance must not be shared across threads; distinct instances may.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(const FrontendConfig& cfg);
  ~LogMelExtractor();
  LogMelExtractor(LogMelExtractor&&) noexcept;
  LogMelExtractor& operator=(LogMelExtractor&&) noexcept;

  LogMelSpectrogram compute(const AudioClip& clip);

  const FrontendConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return filterbank_; }

 private:
  struct Plan;
  FrontendConfig cfg_;
  MelFilterbank filterbank_;
  std::vector<double> window_;
  std::unique_ptr<Plan> plan_;
};

/// Pure-function entry point; builds a fresh extractor each call.
LogMelSpectrogram compute_log_mel(const AudioClip& clip, const FrontendConfig& cfg);

/// Sets the clip's recorded time/frequency masks to log(log_floor).
void apply_spectral_masks(LogMelSpectrogram& spec, const std::vector<SpectralMask>& masks);

}  // namespace mtlasd
