// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

// Python module `mtlasd._core`: corpus synthesis, training, scoring, and evaluation.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlasd/checkpoint.hpp"
#include "mtlasd/config.hpp"
#include "mtlasd/error.hpp"
#include "mtlasd/frontend.hpp"
#include "mtlasd/heads.hpp"
#include "mtlasd/metrics.hpp"
#include "mtlasd/pipeline.hpp"
#include "mtlasd/scorer.hpp"
#include "mtlasd/synth.hpp"

namespace py = pybind11;
using namespace mtlasd;

namespace {

Config make_config(const std::string& preset, const KeyValues& overrides, std::optional<std::uint64_t> seed) {
  Config cfg = Config::preset(preset);
  cfg.apply(overrides);
  if (seed) {
    cfg.train.seed = *seed;
    cfg.tsne.seed = *seed;
  }
  cfg.validate();
  return cfg;
}

py::dict score_row(const ScoreRow& r) {
  py::dict d;
  d["path"] = r.path;
  d["machine_type"] = r.machine_type;
  d["machine_id"] = r.machine_id;
  d["out"] = r.a_out;
  d["arc"] = r.a_arc;
  d["maha"] = r.a_maha;
  d["combined"] = r.combined;
  return d;
}

py::dict log_row(const LossLogRow& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["stage"] = r.stage;
  d["l_type"] = r.l_type;
  d["l_id"] = r.l_id;
  d["l_aug"] = r.l_aug;
  d["total"] = r.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multitask-learning anomalous sound detection";

  py::register_exception<Error>(m, "MtlasdError", PyExc_RuntimeError);

  m.def("compute_auc", &compute_auc, py::arg("scores"), py::arg("labels"),
        "Area under the ROC curve; ties count one half.");

  m.def(
      "mahalanobis",
      [](const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
        GroupStatistics s;
        s.mean = mean;
        s.covariance = cov;
        s.count = 2;
        s.factorize();
        return mahalanobis_score(x, s);
      },
      py::arg("x"), py::arg("mean"), py::arg("covariance"), "Mahalanobis distance (not squared).");

  m.def(
      "arcface_loss",
      [](const Eigen::VectorXd& x, const Eigen::MatrixXd& anchors, int target, double scale, double margin) {
        ArcFaceHead head;
        head.anchors = nn::Parameter("anchors", anchors);
        head.scale = scale;
        head.margin = margin;
        const Eigen::MatrixXd logits = arcface_logits(x, head, target).transpose();
        return arcface_loss(logits, {target}).value;
      },
      py::arg("x"), py::arg("anchors"), py::arg("target"), py::arg("scale") = 16.0, py::arg("margin") = 1.28,
      "Additive angular margin cross-entropy of one embedding.");

  m.def(
      "log_mel",
      [](const std::vector<float>& samples, int sample_rate, const KeyValues& overrides) {
        Config cfg = Config::full();
        cfg.apply(overrides);
        cfg.frontend.validate();
        AudioClip clip;
        clip.samples = samples;
        clip.sample_rate = sample_rate;
        return compute_log_mel(clip, cfg.frontend).frames;
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("overrides") = KeyValues{},
      "Log-Mel spectrogram, frames x mel bins.");

  m.def(
      "synth",
      [](const std::string& out_dir, std::uint64_t seed, int normal_per_id, int anomalous_per_id, double duration) {
        SynthConfig sc = SynthConfig::toy();
        sc.normal_per_id = normal_per_id;
        sc.anomalous_per_id = anomalous_per_id;
        sc.duration_s = duration;
        return static_cast<int>(synth_corpus(sc, seed, out_dir).entries.size());
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("normal_per_id") = 20, py::arg("anomalous_per_id") = 10,
      py::arg("duration") = 10.0, "Writes a synthetic corpus and manifest.csv; returns the clip count.");

  m.def("machine_types", [](const std::string& data) { return open_dataset(data).machine_types(); },
        py::arg("data"));

  m.def(
      "train",
      [](const std::string& data, const std::string& target_type, const std::string& checkpoint,
         const std::string& preset, const KeyValues& overrides, std::optional<std::uint64_t> seed) {
        Config cfg = make_config(preset, overrides, seed);
        cfg.train.target_machine_type = target_type;
        const TrainingSet set = load_training_set(open_dataset(data), target_type, cfg.frontend);
        Checkpoint ck;
        {
          py::gil_scoped_release release;
          ck = train_model(set, cfg);
        }
        save_checkpoint(checkpoint, ck);
        py::list rows;
        for (const LossLogRow& r : ck.log) rows.append(log_row(r));
        return rows;
      },
      py::arg("data"), py::arg("target_type"), py::arg("checkpoint"), py::arg("preset") = "tiny",
      py::arg("overrides") = KeyValues{}, py::arg("seed") = py::none(),
      "Two-stage training; writes the checkpoint and returns the epoch log.");

  m.def(
      "fit_stats",
      [](const std::string& data, const std::string& checkpoint) {
        Checkpoint ck = load_checkpoint(checkpoint);
        const TrainingSet set = load_training_set(open_dataset(data), ck.model.target_type, ck.model.config.frontend);
        ck.scorer = fit_scorer(ck.model, set, ck.model.config.scorer);
        save_checkpoint(checkpoint, ck);
        return combination_name(ck.scorer->combination);
      },
      py::arg("data"), py::arg("checkpoint"), "Fits scorer statistics into the checkpoint; returns the combination.");

  m.def(
      "score",
      [](const std::string& data, const std::vector<std::string>& checkpoints, const std::string& out_csv) {
        const DatasetManifest manifest = open_dataset(data);
        std::vector<ScoreRow> rows;
        for (const std::string& path : checkpoints) {
          Checkpoint ck = load_checkpoint(path);
          require(ck.scorer.has_value(), ErrorCode::kNotFound, "checkpoint " + path + " has no scorer statistics");
          std::vector<std::string> paths;
          const std::vector<AudioClip> clips = load_clips(manifest, Split::kTest, ck.model.target_type, &paths);
          for (ScoreRow& r : score_clips(ck.model, *ck.scorer, clips, paths)) rows.push_back(std::move(r));
        }
        if (!out_csv.empty()) write_score_csv(out_csv, rows);
        py::list out;
        for (const ScoreRow& r : rows) out.append(score_row(r));
        return out;
      },
      py::arg("data"), py::arg("checkpoints"), py::arg("out_csv") = "",
      "Scores the test split with each checkpoint; optionally writes the score CSV.");

  m.def(
      "evaluate",
      [](const std::string& scores_csv, const std::string& data) {
        const std::vector<ScoreRow> rows = read_score_csv(scores_csv);
        const DatasetManifest manifest = open_dataset(data);
        std::vector<std::string> types;
        for (const ScoreRow& r : rows) {
          if (std::find(types.begin(), types.end(), r.machine_type) == types.end()) types.push_back(r.machine_type);
        }
        std::vector<LabeledClip> clips;
        for (const std::string& t : types) {
          for (LabeledClip& c : labeled_test_clips(manifest, t)) clips.push_back(std::move(c));
        }
        const EvalReport report = build_report(rows, clips);
        py::dict out;
        out["overall"] = report.overall;
        out["type_mean"] = report.type_mean;
        py::list ids;
        for (const auto& r : report.ids) {
          py::dict d;
          d["machine_type"] = r.machine_type;
          d["machine_id"] = r.machine_id;
          d["auc"] = r.auc;
          ids.append(d);
        }
        out["ids"] = ids;
        out["table"] = report.render_table();
        return out;
      },
      py::arg("scores_csv"), py::arg("data"), "Per-ID, per-type, and overall AUCs.");
}
