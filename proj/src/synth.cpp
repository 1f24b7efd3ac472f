// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "mtlasd/error.hpp"
#include "mtlasd/frontend.hpp"

namespace fs = std::filesystem;

namespace mtlasd {
namespace {

constexpr double kTargetRms = 0.1;

std::mt19937_64 clip_rng(std::uint64_t seed, std::size_t machine, int id, bool anomalous, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(machine), static_cast<std::uint32_t>(id),
                    static_cast<std::uint32_t>(anomalous), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / std::max<std::size_t>(1, x.size()));
}

std::string clip_name(bool anomalous, int id, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_id_%02d_%08d.wav", anomalous ? "anomaly" : "normal", id, index);
  return buf;
}

}  // namespace

SynthConfig SynthConfig::toy() {
  SynthConfig cfg;
  cfg.machines = {
      {"fan", {240.0, 420.0}, 0.8, 1.0, 0.0},
      {"pump", {300.0, 520.0}, 1.2, 2.5, 0.6},
  };
  return cfg;
}

void SynthConfig::validate() const {
  require(machines.size() >= 2, ErrorCode::kInvalidArgument, "synthesis needs at least two machine types");
  require(normal_per_id >= 1 && anomalous_per_id >= 0, ErrorCode::kInvalidArgument,
          "synthesis clip counts must be positive");
  require(duration_s > 0.0 && sample_rate > 0, ErrorCode::kInvalidArgument, "invalid duration or rate");
  require(detune_min >= 0.08 && detune_max >= detune_min, ErrorCode::kInvalidArgument,
          "detune range must start at >= 8%");
  require(!anomaly_modes.empty(), ErrorCode::kInvalidArgument, "at least one anomaly mode is required");
  const double bin_mel = hz_to_mel(fmax) / (n_mels + 1);
  for (const auto& m : machines) {
    require(m.id_fundamentals_hz.size() >= 2, ErrorCode::kInvalidArgument,
            "machine type " + m.name + " needs at least two IDs");
    require(m.noise_lowpass >= 0.0 && m.noise_lowpass < 1.0, ErrorCode::kInvalidArgument,
            "noise_lowpass must be in [0,1)");
    for (std::size_t i = 0; i < m.id_fundamentals_hz.size(); ++i) {
      const double fi = m.id_fundamentals_hz[i];
      require(fi > 0.0 && fi < sample_rate / 2.0, ErrorCode::kInvalidArgument,
              "fundamental out of range for " + m.name);
      for (std::size_t j = i + 1; j < m.id_fundamentals_hz.size(); ++j) {
        const double dist = std::abs(hz_to_mel(fi) - hz_to_mel(m.id_fundamentals_hz[j]));
        require(dist >= 3.0 * bin_mel, ErrorCode::kInvalidArgument,
                "overlapping fundamentals for " + m.name + " ids " + std::to_string(i) + " and " +
                    std::to_string(j));
      }
    }
  }
}

AudioClip synth_clip(const SynthConfig& cfg, std::size_t machine_index, int machine_id, bool anomalous,
                     int clip_index, std::uint64_t seed) {
  require(machine_index < cfg.machines.size(), ErrorCode::kInvalidArgument, "machine index out of range");
  const SynthMachine& machine = cfg.machines[machine_index];
  require(machine_id >= 0 && machine_id < static_cast<int>(machine.id_fundamentals_hz.size()),
          ErrorCode::kInvalidArgument, "machine id out of range");

  auto rng = clip_rng(seed, machine_index, machine_id, anomalous, clip_index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t n = expected_sample_count(cfg.sample_rate, cfg.duration_s);
  const double nyquist = cfg.sample_rate / 2.0;
  double f0 = machine.id_fundamentals_hz[machine_id] * (1.0 + 0.006 * (unit(rng) - 0.5));

  const AnomalyMode mode = cfg.anomaly_modes[static_cast<std::size_t>(clip_index) % cfg.anomaly_modes.size()];
  if (anomalous && mode == AnomalyMode::kDetune) {
    const double shift = cfg.detune_min + (cfg.detune_max - cfg.detune_min) * unit(rng);
    f0 *= unit(rng) < 0.5 ? 1.0 - shift : 1.0 + shift;
  }

  constexpr int kMaxHarmonics = 8;
  std::vector<double> amp(kMaxHarmonics + 1, 0.0), phase(kMaxHarmonics + 1, 0.0);
  for (int h = 1; h <= kMaxHarmonics; ++h) {
    if (h * f0 >= 0.9 * nyquist) break;
    amp[h] = std::pow(h, -machine.harmonic_decay) * (h >= 3 && h % 2 == 1 ? machine.odd_harmonic_gain : 1.0);
    phase[h] = 2.0 * M_PI * unit(rng);
  }
  if (anomalous && mode == AnomalyMode::kHarmonicDropout) {
    // Remove two of the first four partials.
    int dropped = 0;
    while (dropped < 2) {
      const int h = 1 + static_cast<int>(unit(rng) * 4) % 4;
      if (amp[h] > 0.0) {
        amp[h] = 0.0;
        ++dropped;
      } else if (std::all_of(amp.begin() + 1, amp.begin() + 5, [](double a) { return a == 0.0; })) {
        break;
      }
    }
  }

  const double am_rate = 0.5 + 1.5 * unit(rng);
  const double am_phase = 2.0 * M_PI * unit(rng);
  std::vector<double> tone(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    double s = 0.0;
    for (int h = 1; h <= kMaxHarmonics; ++h) {
      if (amp[h] != 0.0) s += amp[h] * std::sin(2.0 * M_PI * h * f0 * t + phase[h]);
    }
    tone[i] = s * (1.0 + 0.15 * std::sin(2.0 * M_PI * am_rate * t + am_phase));
  }

  if (anomalous && mode == AnomalyMode::kTransientBursts) {
    // Short broadband clicks riding on the tonal signature.
    const double tone_rms = rms(tone);
    const std::size_t burst_len = static_cast<std::size_t>(0.02 * cfg.sample_rate);
    std::size_t pos = static_cast<std::size_t>(unit(rng) * 0.3 * cfg.sample_rate);
    double prev = 0.0;
    while (pos + burst_len < n) {
      for (std::size_t k = 0; k < burst_len; ++k) {
        const double env = std::sin(M_PI * static_cast<double>(k) / burst_len);
        const double w = gauss(rng);
        tone[pos + k] += 4.0 * tone_rms * env * (w - prev);  // first difference tilts energy upward
        prev = w;
      }
      pos += static_cast<std::size_t>((0.2 + 0.3 * unit(rng)) * cfg.sample_rate);
    }
  }

  const double tone_rms = rms(tone);
  const double signal_gain = tone_rms > 0.0 ? kTargetRms / tone_rms : 0.0;
  const double noise_rms = kTargetRms / std::pow(10.0, cfg.snr_db / 20.0);
  std::vector<double> noise(n);
  double state = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    state = machine.noise_lowpass * state + (1.0 - machine.noise_lowpass) * gauss(rng);
    noise[i] = state;
  }
  const double raw_noise_rms = rms(noise);
  const double noise_gain = raw_noise_rms > 0.0 ? noise_rms / raw_noise_rms : 0.0;

  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.machine_type = machine.name;
  clip.machine_id = machine_id;
  clip.condition = anomalous ? Condition::kAnomalous : Condition::kNormal;
  clip.samples.resize(n);
  double peak = 0.0;
  std::vector<double> mix(n);
  for (std::size_t i = 0; i < n; ++i) {
    mix[i] = signal_gain * tone[i] + noise_gain * noise[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double limit = peak > 0.99 ? 0.99 / peak : 1.0;
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = static_cast<float>(mix[i] * limit);
  return clip;
}

DatasetManifest synth_corpus(const SynthConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  DatasetManifest manifest;
  const fs::path root(out_dir);
  const int held_out = mimii_test_normal_count(cfg.normal_per_id, cfg.anomalous_per_id);
  for (std::size_t mi = 0; mi < cfg.machines.size(); ++mi) {
    const auto& machine = cfg.machines[mi];
    for (int id = 0; id < static_cast<int>(machine.id_fundamentals_hz.size()); ++id) {
      char id_dir[16];
      std::snprintf(id_dir, sizeof(id_dir), "id_%02d", id);
      for (int anomalous = 0; anomalous < 2; ++anomalous) {
        const fs::path dir = root / machine.name / id_dir / (anomalous ? "abnormal" : "normal");
        fs::create_directories(dir);
        const int count = anomalous ? cfg.anomalous_per_id : cfg.normal_per_id;
        for (int k = 0; k < count; ++k) {
          const AudioClip clip = synth_clip(cfg, mi, id, anomalous != 0, k, seed);
          const fs::path path = dir / clip_name(anomalous != 0, id, k);
          write_wav(path.string(), clip.samples, clip.sample_rate);
          ManifestEntry e;
          e.path = path.string();
          e.machine_type = machine.name;
          e.machine_id = id;
          e.condition = clip.condition;
          e.split = anomalous || k < held_out ? Split::kTest : Split::kTrain;
          manifest.entries.push_back(std::move(e));
        }
      }
    }
  }
  std::sort(manifest.entries.begin(), manifest.entries.end());
  char snr[16];
  std::snprintf(snr, sizeof(snr), "%gdB", cfg.snr_db);
  if (std::string(snr) == "-6dB" || std::string(snr) == "0dB" || std::string(snr) == "6dB") {
    manifest.snr_tag = snr;
  }
  write_manifest_csv(manifest, (root / "manifest.csv").string());
  return manifest;
}

}  // namespace mtlasd
