// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/pipeline.hpp"

#include <filesystem>
#include <map>

#include "mtlasd/error.hpp"
#include "mtlasd/frontend.hpp"

namespace mtlasd {

namespace fs = std::filesystem;

DatasetManifest open_dataset(const std::string& path, const std::string& layout) {
  if (layout == "csv" || (layout == "auto" && fs::is_regular_file(path))) return read_manifest_csv(path);
  if (layout == "auto") {
    require(fs::is_directory(path), ErrorCode::kNotFound, "dataset not found: " + path);
    if (fs::is_regular_file(fs::path(path) / "manifest.csv")) return load_manifest(path, ManifestLayout::kFlatCsv);
    return load_manifest(path, ManifestLayout::kMimii);
  }
  return load_manifest(path, parse_layout(layout));
}

Eigen::MatrixXd embed_spectrograms(Model& model, const std::vector<const LogMelSpectrogram*>& specs,
                                   std::size_t chunk) {
  require(!specs.empty(), ErrorCode::kInvalidArgument, "nothing to embed");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(specs.size()), model.config.encoder.pooled_dim);
  for (std::size_t start = 0; start < specs.size(); start += chunk) {
    const std::size_t end = std::min(specs.size(), start + chunk);
    const std::vector<const LogMelSpectrogram*> part(specs.begin() + static_cast<std::ptrdiff_t>(start),
                                                     specs.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        model.encoder.embed_batch(part);
  }
  return out;
}

Checkpoint train_model(const TrainingSet& data, const Config& config, const TrainOptions& options,
                       const std::optional<Checkpoint>& resume) {
  Checkpoint ckpt;
  if (resume) {
    ckpt = *resume;
  } else {
    ckpt.model = Model::create(config, data.target_type, data.machine_ids, config.train.seed);
  }
  Trainer trainer(ckpt.model, data);
  if (resume) trainer.resume(*resume);
  trainer.run(options);
  Checkpoint out = trainer.checkpoint();
  out.scorer = ckpt.scorer;
  return out;
}

namespace {

ScoreTriple triple_for(Model& model, const GroupStatistics& stats, const Eigen::VectorXd& x, int machine_id) {
  return raw_scores(x, model.type_head, model.arcface, model.class_of(machine_id), stats);
}

}  // namespace

ScorerState fit_scorer(Model& model, const TrainingSet& data, const ScorerConfig& cfg,
                       const std::vector<AudioClip>& validation) {
  require(data.target_type == model.target_type, ErrorCode::kInvalidArgument,
          "training set and model target different machine types");
  std::vector<const LogMelSpectrogram*> specs;
  std::vector<int> ids;
  for (const TrainingSample& s : data.samples) {
    if (s.class_index < 0) continue;
    specs.push_back(&s.base);
    ids.push_back(s.clip.machine_id);
  }
  const Eigen::MatrixXd emb = embed_spectrograms(model, specs);

  std::map<GroupKey, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) rows[{model.target_type, ids[i]}].push_back(static_cast<Eigen::Index>(i));
  std::map<GroupKey, Eigen::MatrixXd> grouped;
  for (const auto& [key, r] : rows) grouped[key] = emb(r, Eigen::all);

  ScorerState state;
  state.config = cfg;
  state.statistics = fit_normal_statistics(grouped, cfg);
  std::map<GroupKey, std::vector<ScoreTriple>> train_scores;
  for (const auto& [key, r] : rows) {
    const GroupStatistics& st = state.statistics.at(key);
    for (Eigen::Index i : r) train_scores[key].push_back(triple_for(model, st, emb.row(i).transpose(), key.second));
  }
  state.standardization = fit_standardization(train_scores, cfg);

  std::optional<ValidationSet> val;
  if (!validation.empty()) {
    LogMelExtractor extractor(model.config.frontend);
    std::vector<LogMelSpectrogram> vspecs;
    for (const AudioClip& c : validation) vspecs.push_back(extractor.compute(c));
    std::vector<const LogMelSpectrogram*> vptr;
    for (const auto& s : vspecs) vptr.push_back(&s);
    const Eigen::MatrixXd vemb = embed_spectrograms(model, vptr);
    ValidationSet v;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const AudioClip& c = validation[i];
      require(c.machine_type == model.target_type, ErrorCode::kInvalidArgument,
              "validation clip of type '" + c.machine_type + "' for a '" + model.target_type + "' model");
      require(c.condition != Condition::kUnknown, ErrorCode::kInvalidArgument, "validation clips need labels");
      const GroupKey key{c.machine_type, c.machine_id};
      const ScoreTriple raw = triple_for(model, state.statistics.at(key), vemb.row(static_cast<Eigen::Index>(i)).transpose(),
                                         c.machine_id);
      v.standardized.push_back(standardize(raw, state.standardization, key));
      v.labels.push_back(c.condition == Condition::kAnomalous ? 1 : 0);
      v.groups.push_back(key);
    }
    val = std::move(v);
  }
  state.combination = select_combination(val);
  return state;
}

std::vector<ScoreRow> score_clips(Model& model, const ScorerState& scorer, const std::vector<AudioClip>& clips,
                                  const std::vector<std::string>& paths) {
  require(paths.size() == clips.size(), ErrorCode::kShapeMismatch, "score_clips: one path per clip");
  if (clips.empty()) return {};
  LogMelExtractor extractor(model.config.frontend);
  std::vector<ScoreRow> rows;
  const std::size_t chunk = 16;
  for (std::size_t start = 0; start < clips.size(); start += chunk) {
    const std::size_t end = std::min(clips.size(), start + chunk);
    std::vector<LogMelSpectrogram> specs;
    for (std::size_t i = start; i < end; ++i) {
      require(clips[i].machine_type == model.target_type, ErrorCode::kInvalidArgument,
              paths[i] + " is of type '" + clips[i].machine_type + "', model targets '" + model.target_type + "'");
      specs.push_back(extractor.compute(clips[i]));
    }
    std::vector<const LogMelSpectrogram*> ptr;
    for (const auto& s : specs) ptr.push_back(&s);
    const Eigen::MatrixXd emb = model.encoder.embed_batch(ptr);
    for (std::size_t i = start; i < end; ++i) {
      const GroupKey key{clips[i].machine_type, clips[i].machine_id};
      const ScoreTriple raw = triple_for(model, scorer.statistics.at(key),
                                         emb.row(static_cast<Eigen::Index>(i - start)).transpose(), key.second);
      const ScoreTriple z = standardize(raw, scorer.standardization, key);
      rows.push_back({paths[i], key.first, key.second, raw.out, raw.arc, raw.maha,
                      combined_score(z, scorer.combination)});
    }
  }
  return rows;
}

std::vector<AudioClip> load_clips(const DatasetManifest& manifest, Split split, const std::string& type,
                                  std::vector<std::string>* paths) {
  std::vector<AudioClip> clips;
  for (const ManifestEntry& e : manifest.select(split, type)) {
    AudioClip c = read_wav(e.path);
    c.machine_type = e.machine_type;
    c.machine_id = e.machine_id;
    c.condition = e.condition;
    clips.push_back(std::move(c));
    if (paths) paths->push_back(e.path);
  }
  return clips;
}

std::vector<LabeledClip> labeled_test_clips(const DatasetManifest& manifest, const std::string& type) {
  std::vector<LabeledClip> out;
  for (const ManifestEntry& e : manifest.select(Split::kTest, type)) {
    out.push_back({e.path, e.machine_type, e.machine_id, e.condition == Condition::kAnomalous ? 1 : 0});
  }
  return out;
}

}  // namespace mtlasd
