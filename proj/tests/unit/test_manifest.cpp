// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mtlasd/audio.hpp"
#include "mtlasd/error.hpp"
#include "mtlasd/manifest.hpp"
#include "mtlasd/frontend.hpp"
#include "mtlasd/synth.hpp"
#include "test_util.hpp"

using namespace mtlasd;
namespace fs = std::filesystem;

namespace {

void touch_wav(const fs::path& p) {
  fs::create_directories(p.parent_path());
  write_wav(p.string(), std::vector<float>(2048, 0.0f), 16000);
}

}  // namespace

TEST_SUITE("manifest") {

TEST_CASE("mimii enumeration of a normal-only id") {
  test::TempDir dir("mimii");
  for (int i = 0; i < 3; ++i) touch_wav(dir.path() / "fan/id_00/normal" / ("n" + std::to_string(i) + ".wav"));
  const DatasetManifest m = load_manifest(dir.str(), ManifestLayout::kMimii);
  REQUIRE(m.entries.size() == 3);
  for (const auto& e : m.entries) {
    CHECK(e.machine_type == "fan");
    CHECK(e.machine_id == 0);
    CHECK(e.condition == Condition::kNormal);
  }
  CHECK(std::is_sorted(m.entries.begin(), m.entries.end()));
}

TEST_CASE("empty directory gives an empty manifest") {
  test::TempDir dir("empty");
  const DatasetManifest m = load_manifest(dir.str(), ManifestLayout::kMimii);
  CHECK(m.entries.empty());
  CHECK(m.skipped == 0);
}

TEST_CASE("normal and abnormal counts on a fixture tree") {
  test::TempDir dir("counts");
  touch_wav(dir.path() / "fan/id_00/normal/a.wav");
  touch_wav(dir.path() / "fan/id_00/normal/b.wav");
  touch_wav(dir.path() / "fan/id_00/abnormal/c.wav");
  const DatasetManifest m = load_manifest(dir.str(), ManifestLayout::kMimii);
  int train_normals = 0;
  int test_anomalies = 0;
  for (const auto& e : m.entries) {
    train_normals += e.split == Split::kTrain && e.condition == Condition::kNormal;
    test_anomalies += e.split == Split::kTest && e.condition == Condition::kAnomalous;
  }
  CHECK(train_normals == 2);
  CHECK(test_anomalies == 1);
  CHECK(m.entries.size() == 3);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("held-out normals match anomalies but keep two for training") {
  CHECK(mimii_test_normal_count(20, 10) == 10);
  CHECK(mimii_test_normal_count(5, 10) == 3);
  CHECK(mimii_test_normal_count(2, 4) == 0);
  CHECK(mimii_test_normal_count(10, 0) == 0);
}

TEST_CASE("unparsable entries are skipped and counted") {
  test::TempDir dir("skip");
  touch_wav(dir.path() / "fan/id_00/normal/a.wav");
  touch_wav(dir.path() / "fan/idx/normal/b.wav");
  std::ofstream(dir.path() / "fan/id_00/normal/readme.txt") << "x";
  const DatasetManifest m = load_manifest(dir.str(), ManifestLayout::kMimii);
  CHECK(m.entries.size() == 1);
  CHECK(m.skipped == 2);
  CHECK(m.warnings.size() == 2);
}

TEST_CASE("missing root is fatal") {
  CHECK_THROWS_AS(load_manifest("/nonexistent/mtlasd/root", ManifestLayout::kMimii), Error);
}

TEST_CASE("snr tag is read from the path") {
  test::TempDir dir("snr");
  const fs::path root = dir.path() / "-6_dB_fan";
  touch_wav(root / "fan/id_02/normal/a.wav");
  const DatasetManifest m = load_manifest(root.string(), ManifestLayout::kMimii);
  REQUIRE(m.snr_tag.has_value());
  CHECK(*m.snr_tag == "-6dB");
}

TEST_CASE("csv round trip preserves the entry set") {
  test::TempDir dir("csv");
  for (int id : {0, 2}) {
    for (int i = 0; i < 4; ++i) touch_wav(dir.path() / "pump" / ("id_0" + std::to_string(id)) / "normal" / ("n" + std::to_string(i) + ".wav"));
    touch_wav(dir.path() / "pump" / ("id_0" + std::to_string(id)) / "abnormal" / "x,1.wav");
  }
  const DatasetManifest m = load_manifest(dir.str(), ManifestLayout::kMimii);
  const std::string csv = (dir.path() / "manifest.csv").string();
  write_manifest_csv(m, csv);
  const DatasetManifest back = read_manifest_csv(csv);
  CHECK(std::set<ManifestEntry>(m.entries.begin(), m.entries.end()) ==
        std::set<ManifestEntry>(back.entries.begin(), back.entries.end()));
  const DatasetManifest flat = load_manifest(dir.str(), ManifestLayout::kFlatCsv);
  CHECK(flat.entries == back.entries);
}

TEST_CASE("validate rejects anomalous training entries and orphan test ids") {
  DatasetManifest m;
  m.entries.push_back({"a.wav", "fan", 0, Condition::kAnomalous, Split::kTrain});
  CHECK_THROWS_AS(m.validate(), Error);
  m.entries = {{"b.wav", "fan", 1, Condition::kNormal, Split::kTest}};
  CHECK_THROWS_AS(m.validate(), Error);
}

}

TEST_SUITE("synth") {

namespace {

SynthConfig short_toy() {
  SynthConfig c = SynthConfig::toy();
  c.duration_s = 1.0;
  return c;
}

int dominant_bin(const AudioClip& clip) {
  const LogMelSpectrogram s = compute_log_mel(clip, FrontendConfig{});
  Eigen::Index m = 0;
  s.frames.colwise().mean().maxCoeff(&m);
  return static_cast<int>(m);
}

}  // namespace

TEST_CASE("toy corpus has the expected counts") {
  test::TempDir dir("synth");
  const SynthConfig cfg = short_toy();
  const DatasetManifest m = synth_corpus(cfg, 7, dir.str());
  CHECK(m.entries.size() == 120);
  CHECK(m.count(Split::kTest, Condition::kAnomalous) == 40);
  CHECK(m.count(Split::kTrain, Condition::kNormal) + m.count(Split::kTest, Condition::kNormal) == 80);
  std::size_t wavs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) wavs += e.path().extension() == ".wav";
  CHECK(wavs == 120);
  CHECK_NOTHROW(m.validate());
  const DatasetManifest reread = load_manifest(dir.str(), ManifestLayout::kMimii);
  CHECK(reread.entries.size() == 120);
}

TEST_CASE("same seed gives bit-identical files") {
  test::TempDir a("synth_a");
  test::TempDir b("synth_b");
  SynthConfig cfg = short_toy();
  cfg.normal_per_id = 3;
  cfg.anomalous_per_id = 3;
  const DatasetManifest ma = synth_corpus(cfg, 11, a.str());
  synth_corpus(cfg, 11, b.str());
  for (const auto& e : ma.entries) {
    const fs::path rel = fs::relative(e.path, a.path());
    std::ifstream fa(e.path, std::ios::binary);
    std::ifstream fb(b.path() / rel, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}

TEST_CASE("ids of one type have different dominant Mel bins") {
  const SynthConfig cfg = short_toy();
  for (std::size_t t = 0; t < cfg.machines.size(); ++t) {
    const int b0 = dominant_bin(synth_clip(cfg, t, 0, false, 0, 5));
    const int b1 = dominant_bin(synth_clip(cfg, t, 1, false, 0, 5));
    CHECK(std::abs(b0 - b1) >= 3);
  }
}

TEST_CASE("anomalies change spectral shape, not only level") {
  const SynthConfig cfg = short_toy();
  FrontendConfig fc;
  const AudioClip normal = synth_clip(cfg, 0, 0, false, 0, 5);
  const LogMelSpectrogram n = compute_log_mel(normal, fc);
  for (int k = 0; k < 3; ++k) {
    const AudioClip anomaly = synth_clip(cfg, 0, 0, true, k, 5);
    for (float s : anomaly.samples) REQUIRE(std::abs(s) <= 1.0f);
    const LogMelSpectrogram a = compute_log_mel(anomaly, fc);
    // Remove the overall level; what remains is shape.
    const Eigen::RowVectorXd dn = n.frames.colwise().mean().array() - n.frames.mean();
    const Eigen::RowVectorXd da = a.frames.colwise().mean().array() - a.frames.mean();
    CHECK((dn - da).norm() > 1.0);
  }
}

TEST_CASE("overlapping fundamentals are rejected") {
  SynthConfig cfg = SynthConfig::toy();
  cfg.machines[0].id_fundamentals_hz = {300.0, 303.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  test::TempDir dir("overlap");
  CHECK_THROWS_AS(synth_corpus(cfg, 1, dir.str()), Error);
}

TEST_CASE("clip length and label invariants") {
  const SynthConfig cfg = short_toy();
  const AudioClip c = synth_clip(cfg, 1, 1, true, 2, 3);
  CHECK(c.samples.size() == expected_sample_count(16000, 1.0));
  CHECK(c.machine_type == cfg.machines[1].name);
  CHECK(c.machine_id == 1);
  CHECK(c.condition == Condition::kAnomalous);
}

}
