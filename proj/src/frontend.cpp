// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/frontend.hpp"

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <complex>

#include "mtlasd/error.hpp"

namespace mtlasd {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int stft_frame_count(std::size_t num_samples, int fft_size, int hop, bool center) {
  if (center) return static_cast<int>(num_samples / static_cast<std::size_t>(hop)) + 1;
  if (num_samples < static_cast<std::size_t>(fft_size)) return 0;
  return static_cast<int>((num_samples - fft_size) / static_cast<std::size_t>(hop)) + 1;
}

MelFilterbank::MelFilterbank(const FrontendConfig& cfg) {
  const int n_bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  edges_hz_.resize(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges_hz_[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  filters_.resize(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges_hz_[m], mid = edges_hz_[m + 1], hi = edges_hz_[m + 2];
    Filter& f = filters_[m];
    f.first_bin = -1;
    for (int k = 0; k < n_bins; ++k) {
      const double hz = k * bin_hz;
      const double w = std::max(0.0, std::min((hz - lo) / (mid - lo), (hi - hz) / (hi - mid)));
      if (w > 0.0) {
        if (f.first_bin < 0) f.first_bin = k;
        f.weights.resize(k - f.first_bin + 1, 0.0);
        f.weights.back() = w;
      }
    }
    if (f.first_bin < 0) f.first_bin = 0;
  }
}

void MelFilterbank::apply(const double* power, double* out) const {
  for (std::size_t m = 0; m < filters_.size(); ++m) {
    const Filter& f = filters_[m];
    double acc = 0.0;
    for (std::size_t j = 0; j < f.weights.size(); ++j) acc += f.weights[j] * power[f.first_bin + j];
    out[m] = acc;
  }
}

struct LogMelExtractor::Plan {
  Eigen::FFT<double> fft;
  std::vector<double> frame;
  std::vector<std::complex<double>> spectrum;
  std::vector<double> power;
};

LogMelExtractor::LogMelExtractor(const FrontendConfig& cfg)
    : cfg_(cfg), filterbank_((cfg.validate(), cfg)), plan_(std::make_unique<Plan>()) {
  // Periodic Hann.
  window_.resize(cfg.fft_size);
  for (int n = 0; n < cfg.fft_size; ++n) {
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / cfg.fft_size);
  }
  plan_->fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  plan_->frame.resize(cfg.fft_size);
  plan_->power.resize(cfg.fft_size / 2 + 1);
}

LogMelExtractor::~LogMelExtractor() = default;
LogMelExtractor::LogMelExtractor(LogMelExtractor&&) noexcept = default;
LogMelExtractor& LogMelExtractor::operator=(LogMelExtractor&&) noexcept = default;

LogMelSpectrogram LogMelExtractor::compute(const AudioClip& clip) {
  require(clip.sample_rate == cfg_.sample_rate, ErrorCode::kInvalidArgument,
          "clip sample rate " + std::to_string(clip.sample_rate) + " does not match " +
              std::to_string(cfg_.sample_rate));
  const std::size_t n = clip.samples.size();
  require(n >= static_cast<std::size_t>(cfg_.fft_size), ErrorCode::kInvalidArgument,
          "clip shorter than one FFT window");
  for (float s : clip.samples) {
    require(std::isfinite(s), ErrorCode::kNonFinite, "non-finite sample in clip");
  }

  const int half = cfg_.fft_size / 2;
  const int frames = stft_frame_count(n, cfg_.fft_size, cfg_.hop, cfg_.center);
  const long pad = cfg_.center ? half : 0;
  const auto sample_at = [&](long i) -> double {
    // numpy-style reflect: mirrors without repeating the edge sample.
    if (i < 0) i = -i;
    const long last = static_cast<long>(n) - 1;
    if (i > last) i = 2 * last - i;
    return clip.samples[static_cast<std::size_t>(i)];
  };

  LogMelSpectrogram out;
  out.frame_hop = cfg_.hop;
  out.fft_size = cfg_.fft_size;
  out.log_floor = cfg_.log_floor;
  out.frames.resize(frames, cfg_.n_mels);
  std::vector<double> mel(cfg_.n_mels);
  const double log_floor = std::log(cfg_.log_floor);
  Plan& p = *plan_;
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg_.hop - pad;
    for (int k = 0; k < cfg_.fft_size; ++k) p.frame[k] = window_[k] * sample_at(start + k);
    p.fft.fwd(p.spectrum, p.frame);
    for (int k = 0; k <= half; ++k) p.power[k] = std::norm(p.spectrum[k]);
    filterbank_.apply(p.power.data(), mel.data());
    for (int m = 0; m < cfg_.n_mels; ++m) {
      out.frames(t, m) = mel[m] > cfg_.log_floor ? std::log(mel[m]) : log_floor;
    }
  }
  apply_spectral_masks(out, clip.masks);
  if (cfg_.normalize) {
    const double mean = out.frames.mean();
    const double var = (out.frames.array() - mean).square().mean();
    out.frames = (out.frames.array() - mean) / std::sqrt(var + 1e-12);
  }
  return out;
}

LogMelSpectrogram compute_log_mel(const AudioClip& clip, const FrontendConfig& cfg) {
  LogMelExtractor extractor(cfg);
  return extractor.compute(clip);
}

void apply_spectral_masks(LogMelSpectrogram& spec, const std::vector<SpectralMask>& masks) {
  const double value = std::log(spec.log_floor);
  for (const SpectralMask& m : masks) {
    const bool time = m.axis == SpectralMask::Axis::kTime;
    const int extent = time ? spec.num_frames() : spec.num_bins();
    const int width = std::clamp(m.width, 0, extent);
    if (width == 0) continue;
    const int slots = extent - width + 1;
    const int start = std::clamp(static_cast<int>(std::floor(m.position * slots)), 0, slots - 1);
    if (time) {
      spec.frames.middleRows(start, width).setConstant(value);
    } else {
      spec.frames.middleCols(start, width).setConstant(value);
    }
  }
}

}  // namespace mtlasd
