// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "mtlasd/error.hpp"
#include "mtlasd/nn/ops.hpp"
#include "mtlasd/parallel.hpp"

namespace mtlasd {

TrainingSet make_training_set(std::vector<AudioClip> clips, const std::string& target_type,
                              const FrontendConfig& frontend) {
  TrainingSet set;
  set.target_type = target_type;
  std::set<int> ids;
  for (const AudioClip& c : clips) {
    if (c.machine_type == target_type) ids.insert(c.machine_id);
  }
  require(!ids.empty(), ErrorCode::kInvalidArgument, "no training clips of machine type '" + target_type + "'");
  set.machine_ids.assign(ids.begin(), ids.end());
  LogMelExtractor extractor(frontend);
  for (AudioClip& c : clips) {
    require(c.condition == Condition::kNormal, ErrorCode::kInvalidArgument,
            "training clips must be normal; pseudo-anomalies come from other machine types");
    TrainingSample s;
    s.base = extractor.compute(c);
    if (c.machine_type == target_type) {
      s.class_index = static_cast<int>(std::lower_bound(set.machine_ids.begin(), set.machine_ids.end(), c.machine_id) -
                                       set.machine_ids.begin());
    }
    s.clip = std::move(c);
    set.samples.push_back(std::move(s));
  }
  return set;
}

TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& target_type,
                              const FrontendConfig& frontend) {
  std::vector<AudioClip> clips;
  for (const ManifestEntry& e : manifest.select(Split::kTrain)) {
    if (e.condition != Condition::kNormal) continue;
    AudioClip c = read_wav(e.path);
    c.machine_type = e.machine_type;
    c.machine_id = e.machine_id;
    c.condition = Condition::kNormal;
    clips.push_back(std::move(c));
  }
  return make_training_set(std::move(clips), target_type, frontend);
}

BatchPool make_batch_pool(const TrainingSet& data) {
  BatchPool pool;
  pool.by_class.resize(data.machine_ids.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const int c = data.samples[i].class_index;
    if (c >= 0) {
      pool.by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
    } else {
      pool.pseudo.push_back(static_cast<int>(i));
    }
  }
  return pool;
}

BatchPool make_batch_pool(const DatasetManifest& manifest, const std::string& target_type) {
  std::map<int, std::vector<int>> by_id;
  BatchPool pool;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.split != Split::kTrain || e.condition != Condition::kNormal) continue;
    if (e.machine_type == target_type) {
      by_id[e.machine_id].push_back(static_cast<int>(i));
    } else {
      pool.pseudo.push_back(static_cast<int>(i));
    }
  }
  for (auto& [id, idx] : by_id) pool.by_class.push_back(std::move(idx));
  return pool;
}

int BatchPlan::normal_count() const {
  return static_cast<int>(std::count(roles.begin(), roles.end(), SampleRole::kNormal));
}

int BatchPlan::pseudo_count() const {
  return static_cast<int>(std::count(roles.begin(), roles.end(), SampleRole::kPseudo));
}

std::string batch_plan_violation(const BatchPlan& plan, const BatchPool& pool, int stage, int batch_size) {
  const std::size_t n = plan.indices.size();
  if (plan.roles.size() != n || plan.classes.size() != n) return "plan vectors differ in length";
  if (static_cast<int>(n) != batch_size) return "batch holds " + std::to_string(n) + " samples, expected " + std::to_string(batch_size);
  const std::size_t k = pool.by_class.size();
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int idx = plan.indices[i];
    if (plan.roles[i] == SampleRole::kNormal) {
      const int c = plan.classes[i];
      if (c < 0 || c >= static_cast<int>(k)) return "normal sample without a valid class";
      const auto& members = pool.by_class[static_cast<std::size_t>(c)];
      if (std::find(members.begin(), members.end(), idx) == members.end()) return "normal sample not in its class pool";
      ++counts[static_cast<std::size_t>(c)];
    } else {
      if (stage == 1) return "pseudo-anomaly in a stage-1 batch";
      if (plan.classes[i] != -1) return "pseudo-anomaly carries a class";
      if (std::find(pool.pseudo.begin(), pool.pseudo.end(), idx) == pool.pseudo.end()) return "pseudo sample not in pool";
    }
  }
  if (counts != plan.per_class_counts) return "per-class counts do not match the samples";
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*hi - *lo > 1) return "per-class counts differ by more than one";
  if (stage == 2 && (plan.normal_count() != batch_size / 2 || plan.pseudo_count() != batch_size / 2)) {
    return "stage-2 batch is not half normal, half pseudo";
  }
  return {};
}

BatchComposer::BatchComposer(const BatchPool& pool, int stage, int batch_size, std::mt19937_64& rng)
    : pool_(&pool), stage_(stage), batch_size_(batch_size) {
  require(stage == 1 || stage == 2, ErrorCode::kInvalidArgument, "stage must be 1 or 2");
  require(!pool.by_class.empty(), ErrorCode::kInvalidArgument, "batch pool has no target-type classes");
  for (std::size_t c = 0; c < pool.by_class.size(); ++c) {
    require(!pool.by_class[c].empty(), ErrorCode::kInvalidArgument,
            "class " + std::to_string(c) + " has no normal training samples");
  }
  const int k = static_cast<int>(pool.by_class.size());
  if (stage == 2) {
    require(!pool.pseudo.empty(), ErrorCode::kInvalidArgument, "stage 2 needs a nonempty pseudo-anomaly pool");
    require(batch_size % 2 == 0 && batch_size >= 2 * k, ErrorCode::kInvalidArgument,
            "stage-2 batch size must be even and at least twice the number of machine ids");
  } else {
    require(batch_size >= k, ErrorCode::kInvalidArgument, "batch size must be at least the number of machine ids");
  }
  queues_ = pool.by_class;
  for (auto& q : queues_) std::shuffle(q.begin(), q.end(), rng);
  cursors_.assign(queues_.size(), 0);
}

int BatchComposer::normals_per_batch() const { return stage_ == 1 ? batch_size_ : batch_size_ / 2; }

int BatchComposer::batches_per_epoch() const {
  std::size_t total = 0;
  for (const auto& q : queues_) total += q.size();
  const std::size_t per = static_cast<std::size_t>(normals_per_batch());
  return static_cast<int>((total + per - 1) / per);
}

BatchPlan BatchComposer::next(std::mt19937_64& rng) {
  const int k = static_cast<int>(queues_.size());
  const int normals = normals_per_batch();
  const int base = normals / k;
  const int extra = normals % k;
  BatchPlan plan;
  plan.per_class_counts.assign(static_cast<std::size_t>(k), base);
  for (int j = 0; j < extra; ++j) ++plan.per_class_counts[static_cast<std::size_t>((offset_ + j) % k)];
  offset_ = (offset_ + extra) % k;
  for (int c = 0; c < k; ++c) {
    auto& q = queues_[static_cast<std::size_t>(c)];
    auto& cur = cursors_[static_cast<std::size_t>(c)];
    for (int j = 0; j < plan.per_class_counts[static_cast<std::size_t>(c)]; ++j) {
      if (cur == q.size()) {
        std::shuffle(q.begin(), q.end(), rng);
        cur = 0;
      }
      plan.indices.push_back(q[cur++]);
      plan.roles.push_back(SampleRole::kNormal);
      plan.classes.push_back(c);
    }
  }
  if (stage_ == 2) {
    std::uniform_int_distribution<std::size_t> pick(0, pool_->pseudo.size() - 1);
    for (int j = 0; j < batch_size_ - normals; ++j) {
      plan.indices.push_back(pool_->pseudo[pick(rng)]);
      plan.roles.push_back(SampleRole::kPseudo);
      plan.classes.push_back(-1);
    }
  }
  return plan;
}

BatchPlan compose_batch(const BatchPool& pool, int stage, int batch_size, std::mt19937_64& rng) {
  BatchComposer composer(pool, stage, batch_size, rng);
  return composer.next(rng);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, const TrainingSet& data)
    : model_(&model),
      data_(&data),
      pool_(make_batch_pool(data)),
      adam_(model.config.train.learning_rate, model.config.train.adam_beta1, model.config.train.adam_beta2,
            model.config.train.adam_eps),
      extractors_() {
  for (std::size_t w = 0; w < worker_count(); ++w) extractors_.emplace_back(model.config.frontend);
  require(data.target_type == model.target_type, ErrorCode::kInvalidArgument,
          "training set is for '" + data.target_type + "' but the model targets '" + model.target_type + "'");
  require(data.machine_ids == model.machine_ids, ErrorCode::kInvalidArgument,
          "training set machine ids differ from the model's");
  state_.seed = model.config.train.seed;
}

void Trainer::resume(const Checkpoint& ckpt) {
  state_ = ckpt.train;
  log_ = ckpt.log;
  if (ckpt.optimizer) {
    adam_.restore(ckpt.optimizer->steps, ckpt.optimizer->moments);
  } else {
    adam_.reset();
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = *model_;
  c.train = state_;
  c.optimizer = AdamState{adam_.steps(), adam_.moments()};
  c.log = log_;
  return c;
}

std::mt19937_64 Trainer::epoch_rng(std::uint64_t seed, int stage, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

LogMelSpectrogram Trainer::features(const TrainingSample& s, const AugmentationSpec& aug, std::size_t worker) {
  if (aug.kind == AugmentKind::kNone) return s.base;
  const AudioClip out = apply_augmentation(s.clip, aug, model_->config.augment);
  if (aug.kind == AugmentKind::kTimeMask || aug.kind == AugmentKind::kFreqMask) {
    LogMelSpectrogram spec = s.base;
    apply_spectral_masks(spec, out.masks);
    return spec;
  }
  return extractors_[worker].compute(out);
}

StepLosses Trainer::forward_backward(const BatchPlan& plan, int stage, std::mt19937_64* rng) {
  require(stage == 1 || stage == 2, ErrorCode::kInvalidArgument, "stage must be 1 or 2");
  Model& m = *model_;
  const Config& cfg = m.config;
  const bool training = rng != nullptr;
  const std::size_t b = plan.indices.size();
  require(b > 0, ErrorCode::kInvalidArgument, "empty batch");

  std::vector<int> id_targets(b, -1);
  std::vector<int> type_labels(b, -1);
  std::vector<int> aug_labels(b, 0);
  // Draws stay sequential so the RNG stream is independent of the thread count.
  std::vector<AugmentationSpec> augs(b);
  for (std::size_t i = 0; i < b; ++i) {
    require(plan.indices[i] >= 0 && static_cast<std::size_t>(plan.indices[i]) < data_->samples.size(),
            ErrorCode::kInvalidArgument, "batch index out of range");
    if (training && cfg.augment.enabled) augs[i] = sample_augmentation(*rng, cfg.augment);
  }
  std::vector<LogMelSpectrogram> specs(b);
  parallel_for(b, [&](std::size_t i, std::size_t worker) {
    specs[i] = features(data_->samples[static_cast<std::size_t>(plan.indices[i])], augs[i], worker);
  });
  for (std::size_t i = 0; i < b; ++i) {
    const TrainingSample& s = data_->samples[static_cast<std::size_t>(plan.indices[i])];
    const AugmentationSpec& aug = augs[i];
    aug_labels[i] = aug.id();
    const bool primary = aug.kind == AugmentKind::kNone || cfg.augment.feeds_primary_losses;
    if (primary) {
      id_targets[i] = plan.roles[i] == SampleRole::kNormal ? s.class_index : -1;
      type_labels[i] = plan.roles[i] == SampleRole::kNormal ? 1 : 0;
    }
  }
  std::vector<const LogMelSpectrogram*> ptrs;
  for (const auto& s : specs) ptrs.push_back(&s);

  nn::Graph g;
  std::mt19937_64 unused(0);
  const nn::Var input = g.constant(stack_spectrograms(ptrs));
  const nn::Var emb = m.encoder.forward(g, input, specs.front().num_frames(), training ? Mode::kTrain : Mode::kEval,
                                        training ? *rng : unused);

  const bool mean = cfg.heads.reduction == Reduction::kMean;
  auto reduce = [&](nn::Var v, int count) { return mean && count > 0 ? nn::scale(g, v, 1.0 / count) : v; };
  const int id_count = static_cast<int>(std::count_if(id_targets.begin(), id_targets.end(), [](int t) { return t >= 0; }));
  const int type_count = static_cast<int>(std::count_if(type_labels.begin(), type_labels.end(), [](int t) { return t >= 0; }));

  StepLosses out;
  out.id_empty = id_count == 0;
  const nn::Var l_id = reduce(nn::arcface_cross_entropy(g, emb, g.parameter(m.arcface.anchors), id_targets,
                                                        m.arcface.scale, m.arcface.margin),
                              id_count);
  nn::Var total = nn::scale(g, l_id, cfg.heads.alpha);
  out.l_id = g.value(l_id)(0, 0);

  const bool use_aug = cfg.augment.enabled && (stage == 2 || cfg.heads.aug_in_stage1);
  if (use_aug) {
    const nn::Var logits = nn::linear(g, emb, g.parameter(m.aug_head.weight), g.parameter(m.aug_head.bias));
    const nn::Var l_aug = reduce(nn::softmax_cross_entropy(g, logits, aug_labels), static_cast<int>(b));
    total = nn::add_scaled(g, total, l_aug, cfg.heads.beta);
    out.l_aug = g.value(l_aug)(0, 0);
  }
  // Stage 1 never builds type-head nodes, so the head receives no gradient.
  if (stage == 2) {
    const nn::Var z = nn::linear(g, emb, g.parameter(m.type_head.weight), g.parameter(m.type_head.bias));
    const nn::Var l_type = reduce(nn::bce_with_logits(g, z, type_labels), type_count);
    total = nn::add(g, total, l_type);
    out.l_type = g.value(l_type)(0, 0);
  }
  out.total = g.value(total)(0, 0);
  if (!training) return out;

  if (!std::isfinite(out.total)) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "non-finite loss in stage %d, epoch %d: l_type=%g l_id=%g l_aug=%g", stage,
                  state_.next_epoch, out.l_type, out.l_id, out.l_aug);
    fail(ErrorCode::kNonFinite, buf);
  }

  const std::vector<nn::Parameter*> params = m.parameters();
  for (nn::Parameter* p : params) p->zero_grad();
  g.backward(total);
  if (cfg.train.grad_clip_norm > 0.0) nn::clip_grad_norm(params, cfg.train.grad_clip_norm);
  for (nn::Parameter* p : m.type_parameters()) p->trainable = stage == 2;
  adam_.step(params);
  for (nn::Parameter* p : m.type_parameters()) p->trainable = true;
  m.arcface.renormalize();
  return out;
}

StepLosses Trainer::step(const BatchPlan& plan, int stage, std::mt19937_64& rng) {
  return forward_backward(plan, stage, &rng);
}

StepLosses Trainer::evaluate(const BatchPlan& plan, int stage) { return forward_backward(plan, stage, nullptr); }

void Trainer::run_epoch(int stage, int epoch) {
  std::mt19937_64 rng = epoch_rng(state_.seed, stage, epoch);
  BatchComposer composer(pool_, stage, model_->config.train.batch_size, rng);
  const int batches = composer.batches_per_epoch();
  LossLogRow row;
  row.epoch = epoch;
  row.stage = stage;
  for (int i = 0; i < batches; ++i) {
    const StepLosses l = step(composer.next(rng), stage, rng);
    row.l_type += l.l_type;
    row.l_id += l.l_id;
    row.l_aug += l.l_aug;
    row.total += l.total;
  }
  row.l_type /= batches;
  row.l_id /= batches;
  row.l_aug /= batches;
  row.total /= batches;
  log_.push_back(row);
}

bool Trainer::run(const TrainOptions& options) {
  const TrainConfig& tc = model_->config.train;
  require(options.only_stage >= 0 && options.only_stage <= 2, ErrorCode::kInvalidArgument,
          "only_stage must be 0, 1, or 2");
  if (options.only_stage == 2 && state_.stage == 1) {
    state_.stage = 2;
    state_.next_epoch = 1;
  }
  auto save = [&] {
    if (options.checkpoint_path.empty()) return;
    Checkpoint c = checkpoint();
    save_checkpoint(options.checkpoint_path, c);
  };
  int ran = 0;
  while (state_.stage <= 2) {
    if (options.only_stage != 0 && state_.stage != options.only_stage) break;
    const int stage = state_.stage;
    const int epochs = stage == 1 ? tc.stage1_epochs : tc.stage2_epochs;
    if (state_.next_epoch > epochs) {
      state_.stage += 1;
      state_.next_epoch = 1;
      continue;
    }
    if (options.max_epochs >= 0 && ran >= options.max_epochs) return false;
    if (stage == 2 && state_.next_epoch == 1 && tc.reset_optimizer_between_stages) adam_.reset();

    run_epoch(stage, state_.next_epoch);
    ++ran;
    const bool stage_done = state_.next_epoch == epochs;
    state_.next_epoch += 1;
    if (stage_done) {
      state_.stage += 1;
      state_.next_epoch = 1;
    }
    if (options.on_epoch) options.on_epoch(log_.back());
    if (stage_done || (tc.checkpoint_every > 0 && log_.back().epoch % tc.checkpoint_every == 0)) save();
  }
  return true;
}

std::vector<LossLogRow> train_stage1(Model& model, const TrainingSet& data, const TrainOptions& options) {
  Trainer t(model, data);
  TrainOptions o = options;
  o.only_stage = 1;
  t.run(o);
  return t.log();
}

std::vector<LossLogRow> train_stage2(Model& model, const TrainingSet& data, const TrainOptions& options) {
  Trainer t(model, data);
  TrainOptions o = options;
  o.only_stage = 2;
  t.run(o);
  return t.log();
}

}  // namespace mtlasd
