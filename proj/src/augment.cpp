// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mtlasd/error.hpp"

namespace mtlasd {
namespace {

constexpr int kOlaWindow = 1024;
constexpr int kOlaHop = 256;
constexpr int kOlaTolerance = 128;

void check_range(const char* what, double v, double lo, double hi) {
  if (!(v >= lo - 1e-12 && v <= hi + 1e-12)) {
    fail(ErrorCode::kInvalidArgument, std::string(what) + " " + std::to_string(v) + " outside [" +
                                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

// Loops the signal to exactly n samples (or truncates).
std::vector<double> fit_length(const std::vector<double>& x, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (x.empty()) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()];
  return out;
}

// Linear-interpolation resampler reading the input at `step` samples per output sample.
std::vector<double> resample_linear(const std::vector<double>& x, double step) {
  if (x.size() < 2) return x;
  const auto n_out = static_cast<std::size_t>(std::floor((x.size() - 1) / step)) + 1;
  std::vector<double> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = i * step;
    const auto k = static_cast<std::size_t>(pos);
    const double frac = pos - k;
    out[i] = k + 1 < x.size() ? x[k] * (1.0 - frac) + x[k + 1] * frac : x[k];
  }
  return out;
}

}  // namespace

const char* augment_kind_name(AugmentKind k) {
  switch (k) {
    case AugmentKind::kNone: return "none";
    case AugmentKind::kPitchShift: return "pitch_shift";
    case AugmentKind::kTimeShift: return "time_shift";
    case AugmentKind::kTimeStretch: return "time_stretch";
    case AugmentKind::kFadeIn: return "fade_in";
    case AugmentKind::kFadeOut: return "fade_out";
    case AugmentKind::kWhiteNoise: return "white_noise";
    case AugmentKind::kTimeMask: return "time_mask";
    case AugmentKind::kFreqMask: return "freq_mask";
  }
  return "unknown";
}

std::vector<double> ola_time_stretch(const std::vector<double>& x, double rate) {
  require(rate > 0.0, ErrorCode::kInvalidArgument, "stretch rate must be positive");
  if (x.size() < static_cast<std::size_t>(kOlaWindow + 2 * kOlaTolerance)) return resample_linear(x, rate);
  std::vector<double> window(kOlaWindow);
  for (int i = 0; i < kOlaWindow; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kOlaWindow);

  // Waveform-similarity overlap-add: each frame's source position is moved within
  // +-kOlaTolerance of its nominal place to best continue the previous frame, so
  // overlapping frames add in phase and the local pitch survives.
  const long last_start = static_cast<long>(x.size()) - kOlaWindow;
  const double analysis_hop = kOlaHop * rate;
  const auto frames = static_cast<std::size_t>(std::floor(last_start / analysis_hop)) + 1;
  const std::size_t n_out = (frames - 1) * kOlaHop + kOlaWindow;
  const int overlap = kOlaWindow - kOlaHop;
  std::vector<double> out(n_out, 0.0), norm(n_out, 0.0);
  std::vector<double> cum_energy(x.size() + 1, 0.0);  // cum_energy[i] = sum of x[j]^2 for j < i
  for (std::size_t i = 0; i < x.size(); ++i) cum_energy[i + 1] = cum_energy[i] + x[i] * x[i];
  const Eigen::Map<const Eigen::VectorXd> signal(x.data(), static_cast<Eigen::Index>(x.size()));
  long prev = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    long src = std::lround(f * analysis_hop);
    if (f > 0) {
      const long natural = std::min(prev + kOlaHop, last_start);
      const auto reference = signal.segment(natural, overlap);
      double best = -std::numeric_limits<double>::infinity();
      const long lo = std::max(0L, src - kOlaTolerance), hi = std::min(last_start, src + kOlaTolerance);
      long chosen = std::clamp(src, 0L, last_start);
      for (long cand = lo; cand <= hi; ++cand) {
        const double energy = cum_energy[cand + overlap] - cum_energy[cand] + 1e-12;
        const double score = signal.segment(cand, overlap).dot(reference) / std::sqrt(std::max(energy, 1e-12));
        if (score > best) {
          best = score;
          chosen = cand;
        }
      }
      src = chosen;
    }
    prev = src;
    const std::size_t dst = f * kOlaHop;
    for (int i = 0; i < kOlaWindow; ++i) {
      out[dst + i] += window[i] * x[static_cast<std::size_t>(src) + i];
      norm[dst + i] += window[i];
    }
  }
  for (std::size_t i = 0; i < n_out; ++i) {
    if (norm[i] > 1e-3) out[i] /= norm[i];
  }
  std::size_t lead = 0;  // edge samples that only saw the window's tail
  while (lead < n_out / 2 && norm[lead] < 0.5) ++lead;
  std::size_t tail = n_out;
  while (tail > lead + 1 && norm[tail - 1] < 0.5) --tail;
  return {out.begin() + static_cast<std::ptrdiff_t>(lead), out.begin() + static_cast<std::ptrdiff_t>(tail)};
}

AudioClip apply_augmentation(const AudioClip& clip, const AugmentationSpec& spec,
                             const AugmentConfig& cfg, AugmentStats* stats) {
  if (spec.kind == AugmentKind::kNone) return clip;

  switch (spec.kind) {
    case AugmentKind::kPitchShift:
      check_range("pitch shift", spec.value, -cfg.pitch_semitones, cfg.pitch_semitones);
      break;
    case AugmentKind::kTimeShift:
      check_range("time shift", spec.value, -cfg.time_shift_max_s, cfg.time_shift_max_s);
      break;
    case AugmentKind::kTimeStretch:
      check_range("stretch rate", spec.value, cfg.stretch_min, cfg.stretch_max);
      break;
    case AugmentKind::kFadeIn:
    case AugmentKind::kFadeOut:
      check_range("fade fraction", spec.value, cfg.fade_min_frac, cfg.fade_max_frac);
      break;
    case AugmentKind::kWhiteNoise:
      check_range("noise SNR", spec.value, cfg.noise_snr_min_db, cfg.noise_snr_max_db);
      break;
    case AugmentKind::kTimeMask:
      check_range("time mask width", spec.value, 1, cfg.time_mask_max);
      check_range("mask position", spec.position, 0.0, 1.0);
      break;
    case AugmentKind::kFreqMask:
      check_range("freq mask width", spec.value, 1, cfg.freq_mask_max);
      check_range("mask position", spec.position, 0.0, 1.0);
      break;
    case AugmentKind::kNone: break;
  }

  AudioClip out = clip;
  out.augmentation_id = spec.id();
  if (spec.kind == AugmentKind::kTimeMask || spec.kind == AugmentKind::kFreqMask) {
    SpectralMask mask;
    mask.axis = spec.kind == AugmentKind::kTimeMask ? SpectralMask::Axis::kTime
                                                    : SpectralMask::Axis::kFrequency;
    mask.width = static_cast<int>(std::lround(spec.value));
    mask.position = spec.position;
    out.masks.push_back(mask);
    return out;
  }

  const std::size_t n = clip.samples.size();
  std::vector<double> x(clip.samples.begin(), clip.samples.end());
  std::vector<double> y;
  switch (spec.kind) {
    case AugmentKind::kPitchShift: {
      // Stretch by the frequency ratio, then resample back to the original duration.
      const double ratio = std::pow(2.0, spec.value / 12.0);
      y = fit_length(resample_linear(ola_time_stretch(x, 1.0 / ratio), ratio), n);
      break;
    }
    case AugmentKind::kTimeShift: {
      y.resize(n);
      const long shift = std::lround(spec.value * clip.sample_rate);
      const long len = static_cast<long>(n);
      for (long i = 0; i < len; ++i) y[static_cast<std::size_t>(((i + shift) % len + len) % len)] = x[i];
      break;
    }
    case AugmentKind::kTimeStretch:
      y = fit_length(ola_time_stretch(x, spec.value), n);
      break;
    case AugmentKind::kFadeIn:
    case AugmentKind::kFadeOut: {
      y = x;
      const auto ramp = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.value * n)));
      for (std::size_t i = 0; i < ramp && i < n; ++i) {
        const double g = static_cast<double>(i) / ramp;
        if (spec.kind == AugmentKind::kFadeIn) y[i] *= g;
        else y[n - 1 - i] *= g;
      }
      break;
    }
    case AugmentKind::kWhiteNoise: {
      std::mt19937_64 rng(spec.rng_seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> noise(n);
      double clean_power = 0.0, noise_power = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        noise[i] = gauss(rng);
        clean_power += x[i] * x[i];
        noise_power += noise[i] * noise[i];
      }
      const double target = clean_power / std::pow(10.0, spec.value / 10.0);
      const double gain = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
      y.resize(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + gain * noise[i];
      break;
    }
    default: break;
  }

  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = y[i];
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++clipped;
    }
    out.samples[i] = static_cast<float>(v);
  }
  if (stats) stats->clipped = clipped;
  return out;
}

AugmentationSpec sample_augmentation(std::mt19937_64& rng, const AugmentConfig& cfg) {
  std::vector<int> kinds = cfg.kinds;
  if (kinds.empty()) {
    for (int k = 0; k < kNumAugmentKinds; ++k) kinds.push_back(k);
  }
  std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentationSpec spec;
  spec.kind = static_cast<AugmentKind>(kinds[pick(rng)]);
  const double u = unit(rng);
  spec.position = unit(rng);
  spec.rng_seed = rng();
  const auto lerp = [u](double lo, double hi) { return lo + (hi - lo) * u; };
  switch (spec.kind) {
    case AugmentKind::kNone: spec.position = 0.0; spec.rng_seed = 0; break;
    case AugmentKind::kPitchShift: spec.value = lerp(-cfg.pitch_semitones, cfg.pitch_semitones); break;
    case AugmentKind::kTimeShift: spec.value = lerp(-cfg.time_shift_max_s, cfg.time_shift_max_s); break;
    case AugmentKind::kTimeStretch: spec.value = lerp(cfg.stretch_min, cfg.stretch_max); break;
    case AugmentKind::kFadeIn:
    case AugmentKind::kFadeOut: spec.value = lerp(cfg.fade_min_frac, cfg.fade_max_frac); break;
    case AugmentKind::kWhiteNoise: spec.value = lerp(cfg.noise_snr_min_db, cfg.noise_snr_max_db); break;
    case AugmentKind::kTimeMask:
      spec.value = 1 + std::min(cfg.time_mask_max - 1, static_cast<int>(u * cfg.time_mask_max));
      break;
    case AugmentKind::kFreqMask:
      spec.value = 1 + std::min(cfg.freq_mask_max - 1, static_cast<int>(u * cfg.freq_mask_max));
      break;
  }
  return spec;
}

}  // namespace mtlasd
