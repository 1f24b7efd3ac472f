// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mtlasd/checkpoint.hpp"
#include "mtlasd/error.hpp"
#include "mtlasd/synth.hpp"
#include "mtlasd/trainer.hpp"
#include "test_util.hpp"

using namespace mtlasd;
using mtlasd::test::TempDir;

namespace {

BatchPool pool_with(int classes, int per_class, int pseudo) {
  BatchPool p;
  int next = 0;
  p.by_class.resize(static_cast<std::size_t>(classes));
  for (auto& c : p.by_class) {
    for (int i = 0; i < per_class; ++i) c.push_back(next++);
  }
  for (int i = 0; i < pseudo; ++i) p.pseudo.push_back(next++);
  return p;
}

// Short clips keep the toy runs fast: 1 s gives 32 frames.
TrainingSet toy_set(int per_id, double duration_s = 1.0, std::uint64_t seed = 5) {
  SynthConfig sc = SynthConfig::toy();
  sc.duration_s = duration_s;
  std::vector<AudioClip> clips;
  for (std::size_t m = 0; m < sc.machines.size(); ++m) {
    for (int id = 0; id < 2; ++id) {
      for (int i = 0; i < per_id; ++i) clips.push_back(synth_clip(sc, m, id, false, i, seed));
    }
  }
  return make_training_set(std::move(clips), "fan", FrontendConfig{});
}

Config toy_config(int stage1, int stage2) {
  Config c = Config::tiny();
  c.train.stage1_epochs = stage1;
  c.train.stage2_epochs = stage2;
  c.train.seed = 11;
  return c;
}

Model toy_model(const Config& c, const TrainingSet& data, std::uint64_t seed = 3) {
  return Model::create(c, data.target_type, data.machine_ids, seed);
}

bool same_values(const std::vector<nn::Parameter*>& a, const std::vector<nn::Parameter*>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->value != b[i]->value) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("composer") {

TEST_CASE("stage-2 batch with four ids splits normals 4,4,3,3 and rotates the remainder") {
  const BatchPool pool = pool_with(4, 20, 30);
  std::mt19937_64 rng(1);
  BatchComposer c(pool, 2, 28, rng);
  const BatchPlan first = c.next(rng);
  CHECK(first.normal_count() == 14);
  CHECK(first.pseudo_count() == 14);
  CHECK(first.per_class_counts == std::vector<int>{4, 4, 3, 3});
  CHECK(batch_plan_violation(first, pool, 2, 28).empty());
  const BatchPlan second = c.next(rng);
  CHECK(second.per_class_counts == std::vector<int>{3, 3, 4, 4});
}

TEST_CASE("seven ids get two normals each; stage 1 four ids get seven each") {
  std::mt19937_64 rng(2);
  const BatchPool seven = pool_with(7, 5, 10);
  const BatchPlan p = compose_batch(seven, 2, 28, rng);
  CHECK(p.per_class_counts == std::vector<int>(7, 2));
  CHECK(p.pseudo_count() == 14);
  const BatchPool four = pool_with(4, 9, 0);
  const BatchPlan q = compose_batch(four, 1, 28, rng);
  CHECK(q.per_class_counts == std::vector<int>(4, 7));
  CHECK(q.pseudo_count() == 0);
  CHECK(batch_plan_violation(q, four, 1, 28).empty());
}

TEST_CASE("remainder rotation equalizes counts over a cycle") {
  for (int k : {3, 4, 5, 6, 9}) {
    const BatchPool pool = pool_with(k, 4, 8);
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    BatchComposer c(pool, 2, 28, rng);
    std::vector<int> totals(static_cast<std::size_t>(k), 0);
    for (int b = 0; b < k; ++b) {
      const BatchPlan plan = c.next(rng);
      CHECK(batch_plan_violation(plan, pool, 2, 28).empty());
      for (int j = 0; j < k; ++j) totals[j] += plan.per_class_counts[j];
    }
    CHECK(*std::max_element(totals.begin(), totals.end()) == *std::min_element(totals.begin(), totals.end()));
  }
}

TEST_CASE("random pools always satisfy the batch invariants") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> kdist(1, 8), per(1, 12), pseudo(1, 40), half(1, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = kdist(rng);
    BatchPool pool = pool_with(k, 1, pseudo(rng));
    for (auto& c : pool.by_class) c.resize(static_cast<std::size_t>(per(rng)), c.front());
    const int stage = trial % 2 + 1;
    const int bs = stage == 2 ? 2 * std::max(k, half(rng)) : std::max(k, 2 * half(rng));
    BatchComposer c(pool, stage, bs, rng);
    for (int b = 0; b < 5; ++b) {
      const std::string why = batch_plan_violation(c.next(rng), pool, stage, bs);
      INFO(why);
      CHECK(why.empty());
    }
  }
}

TEST_CASE("composer errors") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(BatchComposer(pool_with(2, 3, 0), 2, 28, rng), Error);
  CHECK_THROWS_AS(BatchComposer(pool_with(2, 3, 5), 2, 27, rng), Error);
  CHECK_THROWS_AS(BatchComposer(pool_with(8, 3, 5), 2, 14, rng), Error);
  BatchPool hole = pool_with(2, 3, 5);
  hole.by_class[1].clear();
  CHECK_THROWS_AS(BatchComposer(hole, 1, 28, rng), Error);
  // Tampered plans are caught.
  const BatchPool pool = pool_with(2, 3, 5);
  BatchPlan p = compose_batch(pool, 2, 4, rng);
  p.roles[0] = SampleRole::kPseudo;
  CHECK_FALSE(batch_plan_violation(p, pool, 2, 4).empty());
}

TEST_CASE("epoch length covers the normal pool") {
  std::mt19937_64 rng(5);
  CHECK(BatchComposer(pool_with(2, 14, 3), 1, 28, rng).batches_per_epoch() == 1);
  CHECK(BatchComposer(pool_with(2, 15, 3), 1, 28, rng).batches_per_epoch() == 2);
  CHECK(BatchComposer(pool_with(2, 14, 3), 2, 28, rng).batches_per_epoch() == 2);
}

}

TEST_SUITE("trainer") {

TEST_CASE("one stage-1 epoch on 28 samples is one step and leaves the type head untouched") {
  const TrainingSet data = toy_set(14);
  const Config cfg = toy_config(1, 1);
  Model model = toy_model(cfg, data);
  const TypeHead before = model.type_head;
  const nn::Parameter anchors_before = model.arcface.anchors;
  Trainer t(model, data);
  TrainOptions o;
  o.only_stage = 1;
  t.run(o);
  CHECK(t.optimizer().steps() == 1);
  CHECK(t.log().size() == 1);
  CHECK(model.type_head.weight.value == before.weight.value);
  CHECK(model.type_head.bias.value == before.bias.value);
  CHECK(model.arcface.anchors.value != anchors_before.value);
  for (int k = 0; k < model.arcface.classes(); ++k) {
    CHECK(model.arcface.anchors.value.row(k).norm() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("stage 1 never moves the type head; stage 2 does") {
  const TrainingSet data = toy_set(7);
  const Config cfg = toy_config(3, 2);
  Model model = toy_model(cfg, data);
  const TypeHead init = model.type_head;
  Trainer t(model, data);
  TrainOptions o;
  o.on_epoch = [&](const LossLogRow& row) {
    if (row.stage == 1) {
      CHECK(model.type_head.weight.value == init.weight.value);
      CHECK(model.type_head.bias.value == init.bias.value);
      CHECK(row.l_type == 0.0);
    }
  };
  CHECK(t.run(o));
  CHECK(model.type_head.weight.value != init.weight.value);
  CHECK(t.state().stage == 3);
  REQUIRE(t.log().size() == 5);
  CHECK(t.log()[3].l_type > 0.0);
}

TEST_CASE("type-head gradient is the gradient of the type loss alone") {
  const TrainingSet data = toy_set(7);
  Config cfg = toy_config(1, 1);
  Model full = toy_model(cfg, data);
  Model only_type = full;
  only_type.config.heads.alpha = 0.0;
  only_type.config.heads.beta = 0.0;
  const BatchPool pool = make_batch_pool(data);
  std::mt19937_64 r0(9);
  const BatchPlan plan = compose_batch(pool, 2, 28, r0);
  Trainer a(full, data), b(only_type, data);
  std::mt19937_64 ra(10), rb(10);
  a.step(plan, 2, ra);
  b.step(plan, 2, rb);
  CHECK(full.type_head.weight.grad.norm() > 0.0);
  CHECK((full.type_head.weight.grad - only_type.type_head.weight.grad).norm() <=
        1e-12 * full.type_head.weight.grad.norm());
  CHECK((full.type_head.bias.grad - only_type.type_head.bias.grad).norm() <= 1e-12 * full.type_head.bias.grad.norm());
}

TEST_CASE("total loss is the weighted sum of its components") {
  const TrainingSet data = toy_set(7);
  Config cfg = toy_config(1, 1);
  cfg.heads.alpha = 0.7;
  cfg.heads.beta = 0.3;
  Model model = toy_model(cfg, data);
  Trainer t(model, data);
  const BatchPool pool = make_batch_pool(data);
  std::mt19937_64 rng(12);
  for (int stage : {1, 2}) {
    const BatchPlan plan = compose_batch(pool, stage, 28, rng);
    const StepLosses e = t.evaluate(plan, stage);
    CHECK(std::abs(e.total - total_loss(e.l_type, e.l_id, e.l_aug, {0.7, 0.3}, stage)) < 1e-9);
    const StepLosses s = t.step(plan, stage, rng);
    CHECK(std::abs(s.total - total_loss(s.l_type, s.l_id, s.l_aug, {0.7, 0.3}, stage)) < 1e-9);
  }
  cfg.heads.reduction = Reduction::kMean;
  Model mean_model = toy_model(cfg, data);
  Model sum_model = mean_model;
  sum_model.config.heads.reduction = Reduction::kSum;
  const BatchPlan plan = compose_batch(pool, 2, 28, rng);
  const StepLosses m = Trainer(mean_model, data).evaluate(plan, 2);
  const StepLosses s = Trainer(sum_model, data).evaluate(plan, 2);
  CHECK(m.l_id == doctest::Approx(s.l_id / 14.0).epsilon(1e-12));
  CHECK(m.l_type == doctest::Approx(s.l_type / 28.0).epsilon(1e-12));
  CHECK(m.l_aug == doctest::Approx(s.l_aug / 28.0).epsilon(1e-12));
}

TEST_CASE("masking augmented samples out of the primary losses") {
  const TrainingSet data = toy_set(7);
  Config cfg = toy_config(1, 1);
  cfg.augment.feeds_primary_losses = false;
  cfg.augment.kinds = {7};  // every draw is a time mask
  Model model = toy_model(cfg, data);
  Trainer t(model, data);
  std::mt19937_64 rng(13);
  const BatchPlan plan = compose_batch(make_batch_pool(data), 2, 28, rng);
  const StepLosses s = t.step(plan, 2, rng);
  CHECK(s.id_empty);
  CHECK(s.l_id == 0.0);
  CHECK(s.l_type == 0.0);
  CHECK(s.l_aug > 0.0);
}

TEST_CASE("interrupted and resumed runs reproduce an uninterrupted run") {
  TempDir dir("resume");
  const TrainingSet data = toy_set(7);
  const Config cfg = toy_config(3, 2);

  Model straight = toy_model(cfg, data);
  Trainer full(straight, data);
  full.run();

  Model part = toy_model(cfg, data);
  Trainer first(part, data);
  TrainOptions o;
  o.max_epochs = 2;
  CHECK_FALSE(first.run(o));
  const std::string path = (dir.path() / "mid.ckpt").string();
  Checkpoint mid = first.checkpoint();
  save_checkpoint(path, mid);

  Checkpoint loaded = load_checkpoint(path);
  Trainer second(loaded.model, data);
  second.resume(loaded);
  CHECK(second.run());
  CHECK(second.log() == full.log());
  CHECK(same_values(loaded.model.parameters(), straight.parameters()));
  // Resuming across the stage boundary also matches.
  Model part2 = toy_model(cfg, data);
  Trainer a(part2, data);
  TrainOptions o3;
  o3.max_epochs = 3;
  a.run(o3);
  Checkpoint at_boundary = a.checkpoint();
  Trainer b(at_boundary.model, data);
  b.resume(at_boundary);
  b.run();
  CHECK(b.log() == full.log());
}

TEST_CASE("two runs with the same seed log identical losses") {
  const TrainingSet data = toy_set(7);
  const Config cfg = toy_config(2, 1);
  Model m1 = toy_model(cfg, data), m2 = toy_model(cfg, data);
  Trainer t1(m1, data), t2(m2, data);
  t1.run();
  t2.run();
  CHECK(t1.log() == t2.log());
  Config other = cfg;
  other.train.seed = 12;
  Model m3 = toy_model(other, data);
  Trainer t3(m3, data);
  t3.run();
  CHECK_FALSE(t3.log() == t1.log());
}

TEST_CASE("checkpoint round trip preserves everything") {
  TempDir dir("ckpt");
  const TrainingSet data = toy_set(7);
  Config cfg = toy_config(1, 1);
  cfg.encoder.conv_norm = ConvNorm::kLayer;
  Model model = toy_model(cfg, data);
  Trainer t(model, data);
  t.run();
  Checkpoint c = t.checkpoint();
  const std::string path = (dir.path() / "a.ckpt").string();
  save_checkpoint(path, c);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.model.config.to_key_values() == cfg.to_key_values());
  CHECK(back.model.target_type == "fan");
  CHECK(back.model.machine_ids == data.machine_ids);
  Model copy = back.model;
  CHECK(same_values(copy.parameters(), model.parameters()));
  CHECK(back.log == t.log());
  CHECK(back.train.stage == 3);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->steps == t.optimizer().steps());
  CHECK(back.model.arcface.scale == 16.0);
  CHECK(back.model.arcface.margin == 1.28);

  std::ofstream(dir.path() / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint((dir.path() / "junk.ckpt").string()), Error);
  CHECK_THROWS_AS(load_checkpoint((dir.path() / "absent.ckpt").string()), Error);
}

TEST_CASE("loss log rows format as csv") {
  CHECK(kLossLogHeader == std::string("epoch,stage,l_type,l_id,l_aug,total"));
  const std::string line = format_log_row({3, 2, 0.5, 1.25, 2.0, 3.75});
  CHECK(line.rfind("3,2,0.5,1.25,2,3.75", 0) == 0);
}

TEST_CASE("stage-1 loss decreases on separable ids in most seeds") {
  const TrainingSet data = toy_set(14, 0.5);
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Config cfg = toy_config(10, 1);
    cfg.train.seed = seed;
    cfg.augment.enabled = false;
    Model model = toy_model(cfg, data, seed + 100);
    const auto log = train_stage1(model, data);
    bool ok = log.size() == 10;
    for (std::size_t i = 1; i < log.size(); ++i) ok = ok && log[i].total < log[i - 1].total;
    monotone += ok;
  }
  CHECK(monotone >= 8);
}

TEST_CASE("type head separates disjoint pseudo-anomalies within 20 stage-2 epochs") {
  const TrainingSet data = toy_set(40, 0.5);
  Config cfg = toy_config(2, 20);
  Model model = toy_model(cfg, data);
  Trainer t(model, data);
  t.run();
  int correct = 0;
  for (const TrainingSample& s : data.samples) {
    const double p = model.type_head.probability(model.encoder.embed(s.base));
    correct += (p > 0.5) == (s.class_index >= 0);
  }
  CHECK(static_cast<double>(correct) / data.samples.size() >= 0.95);
}

TEST_CASE("training sets reject anomalous clips and unknown targets") {
  SynthConfig sc = SynthConfig::toy();
  sc.duration_s = 0.5;
  std::vector<AudioClip> clips = {synth_clip(sc, 0, 0, true, 0, 1)};
  CHECK_THROWS_AS(make_training_set(clips, "fan", FrontendConfig{}), Error);
  clips = {synth_clip(sc, 1, 0, false, 0, 1)};
  CHECK_THROWS_AS(make_training_set(clips, "fan", FrontendConfig{}), Error);
  const TrainingSet data = toy_set(2, 0.5);
  Model wrong = Model::create(toy_config(1, 1), "pump", data.machine_ids, 1);
  CHECK_THROWS_AS(Trainer(wrong, data), Error);
}

}
