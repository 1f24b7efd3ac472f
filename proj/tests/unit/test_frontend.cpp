// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "mtlasd/audio.hpp"
#include "mtlasd/error.hpp"
#include "mtlasd/frontend.hpp"
#include "test_util.hpp"

using namespace mtlasd;

namespace {

AudioClip sine_clip(double hz, std::size_t n, double amp = 0.5) {
  AudioClip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * i / 16000.0));
  return c;
}

AudioClip noise_clip(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  AudioClip c;
  c.samples.resize(n);
  for (auto& s : c.samples) s = u(rng);
  return c;
}

// Independent HTK Mel conversion.
double mel_oracle(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double hz_oracle(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

TEST_SUITE("frontend") {

TEST_CASE("canonical clip yields 313 x 128") {
  // Centered STFT: a frame starts every hop over the signal, plus the final one.
  const std::size_t n = 160000;
  const int expected = static_cast<int>(n / 512) + 1;
  CHECK(expected == 313);
  const LogMelSpectrogram s = compute_log_mel(noise_clip(n, 1), FrontendConfig{});
  CHECK(s.num_frames() == expected);
  CHECK(s.num_bins() == 128);
  CHECK(s.frames.allFinite());
  CHECK(s.frames.minCoeff() >= std::log(1e-10));
}

TEST_CASE("frame count depends only on length, hop and padding") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1024, 20000);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = len(rng);
    FrontendConfig cfg;
    const int expected_center = static_cast<int>(n / cfg.hop) + 1;
    const int expected_valid = static_cast<int>((n - cfg.fft_size) / cfg.hop) + 1;
    CHECK(stft_frame_count(n, cfg.fft_size, cfg.hop, true) == expected_center);
    CHECK(stft_frame_count(n, cfg.fft_size, cfg.hop, false) == expected_valid);
    CHECK(compute_log_mel(noise_clip(n, trial), cfg).num_frames() == expected_center);
    CHECK(compute_log_mel(sine_clip(440.0, n), cfg).num_frames() == expected_center);
  }
}

TEST_CASE("silence maps to the log floor everywhere") {
  AudioClip c;
  c.samples.assign(16000, 0.0f);
  const LogMelSpectrogram s = compute_log_mel(c, FrontendConfig{});
  CHECK((s.frames.array() == std::log(1e-10)).all());
}

TEST_CASE("1 kHz sine peaks in a stable bin whose filter brackets 1 kHz") {
  FrontendConfig cfg;
  const LogMelSpectrogram s = compute_log_mel(sine_clip(1000.0, 32000), cfg);
  std::vector<int> argmax;
  for (int t = 4; t < s.num_frames() - 4; ++t) {
    Eigen::Index m = 0;
    s.frames.row(t).maxCoeff(&m);
    argmax.push_back(static_cast<int>(m));
  }
  for (int m : argmax) CHECK(m == argmax.front());
  // Filter m spans edges m..m+2 of 130 points equally spaced on the Mel axis.
  const int m = argmax.front();
  const double step = mel_oracle(8000.0) / 129.0;
  const double lo = hz_oracle(step * m);
  const double hi = hz_oracle(step * (m + 2));
  CHECK(lo < 1000.0);
  CHECK(hi > 1000.0);
  const double center = hz_oracle(step * (m + 1));
  CHECK(std::abs(center - 1000.0) < (hi - lo) / 2.0);
}

TEST_CASE("filterbank centers follow the HTK Mel scale") {
  FrontendConfig cfg;
  const MelFilterbank fb(cfg);
  REQUIRE(fb.num_bins() == 128);
  const double step = mel_oracle(8000.0) / 129.0;
  for (int m = 0; m < 128; ++m) CHECK(fb.center_hz(m) == doctest::Approx(hz_oracle(step * (m + 1))).epsilon(1e-12));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(mel_oracle(1000.0)).epsilon(1e-12));
  CHECK(mel_to_hz(hz_to_mel(3210.0)) == doctest::Approx(3210.0).epsilon(1e-12));
}

TEST_CASE("pure and scale-monotone") {
  const AudioClip c = noise_clip(8000, 9);
  const LogMelSpectrogram a = compute_log_mel(c, FrontendConfig{});
  const LogMelSpectrogram b = compute_log_mel(c, FrontendConfig{});
  CHECK(a.frames == b.frames);
  for (double k : {1.5, 2.0}) {
    AudioClip louder = c;
    for (auto& s : louder.samples) s = static_cast<float>(s * k);
    const LogMelSpectrogram l = compute_log_mel(louder, FrontendConfig{});
    CHECK(((l.frames - a.frames).array() >= 0.0).all());
  }
}

TEST_CASE("rejects short, non-finite and mismatched-rate clips") {
  CHECK_THROWS_AS(compute_log_mel(noise_clip(1000, 1), FrontendConfig{}), Error);
  AudioClip nan = noise_clip(4096, 1);
  nan.samples[100] = std::nanf("");
  CHECK_THROWS_AS(compute_log_mel(nan, FrontendConfig{}), Error);
  AudioClip rate = noise_clip(4096, 1);
  rate.sample_rate = 22050;
  CHECK_THROWS_AS(compute_log_mel(rate, FrontendConfig{}), Error);
}

TEST_CASE("spectral masks set one contiguous band to the floor") {
  AudioClip c = noise_clip(160000, 4);
  c.masks.push_back({SpectralMask::Axis::kTime, 0.3, 30});
  const LogMelSpectrogram s = compute_log_mel(c, FrontendConfig{});
  const double floor = std::log(1e-10);
  int run = 0;
  int best = 0;
  int total = 0;
  for (int t = 0; t < s.num_frames(); ++t) {
    const bool masked = (s.frames.row(t).array() == floor).all();
    total += masked;
    run = masked ? run + 1 : 0;
    best = std::max(best, run);
  }
  CHECK(total == 30);
  CHECK(best == 30);
}

TEST_CASE("wav round trip at 16 bit") {
  test::TempDir dir("wav");
  const AudioClip c = sine_clip(300.0, 4000, 0.7);
  const std::string path = (dir.path() / "a.wav").string();
  write_wav(path, c.samples, 16000);
  const AudioClip back = read_wav(path);
  REQUIRE(back.samples.size() == c.samples.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < c.samples.size(); ++i) CHECK(std::abs(back.samples[i] - c.samples[i]) <= 1.0 / 32767.0);
  CHECK(expected_sample_count(16000, 10.0) == 160000);
  CHECK_THROWS_AS(read_wav((dir.path() / "missing.wav").string()), Error);
}

}
