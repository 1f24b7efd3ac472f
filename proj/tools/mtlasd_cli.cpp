// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, train, fit-stats, score, eval, viz.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtlasd/checkpoint.hpp"
#include "mtlasd/config.hpp"
#include "mtlasd/error.hpp"
#include "mtlasd/metrics.hpp"
#include "mtlasd/pipeline.hpp"
#include "mtlasd/synth.hpp"
#include "mtlasd/trainer.hpp"
#include "mtlasd/tsne.hpp"

namespace fs = std::filesystem;
using namespace mtlasd;

namespace {

struct Globals {
  std::string config_path;
  std::string preset = "full";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::vector<std::string> overrides;  // key=value
};

Config load_config(const Globals& g) {
  Config cfg = Config::preset(g.preset);
  if (!g.config_path.empty()) cfg.apply(read_key_values_file(g.config_path));
  KeyValues kv;
  for (const std::string& o : g.overrides) {
    const auto eq = o.find('=');
    require(eq != std::string::npos, ErrorCode::kInvalidArgument, "--set expects key=value, got '" + o + "'");
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  cfg.apply(kv);
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.tsne.seed = *g.seed;
  }
  cfg.validate();
  return cfg;
}

// With a target type the checkpoint flag names one file; without, a directory of <type>.ckpt files.
std::string checkpoint_file(const Globals& g, const std::string& type, bool single) {
  require(!g.checkpoint.empty(), ErrorCode::kInvalidArgument, "--checkpoint is required");
  return single ? g.checkpoint : (fs::path(g.checkpoint) / (type + ".ckpt")).string();
}

std::vector<std::string> target_types(const DatasetManifest& m, const std::string& requested) {
  if (!requested.empty()) return {requested};
  std::vector<std::string> types = m.machine_types();
  require(!types.empty(), ErrorCode::kNotFound, "dataset holds no machine types");
  return types;
}

std::vector<std::string> checkpoint_types(const Globals& g, const std::string& requested) {
  if (!requested.empty()) return {requested};
  require(!g.checkpoint.empty(), ErrorCode::kInvalidArgument, "--checkpoint is required");
  require(fs::is_directory(g.checkpoint), ErrorCode::kNotFound,
          "checkpoint directory not found: " + g.checkpoint + " (pass --target-type for a single file)");
  std::vector<std::string> types;
  for (const auto& e : fs::directory_iterator(g.checkpoint)) {
    if (e.path().extension() == ".ckpt") types.push_back(e.path().stem().string());
  }
  std::sort(types.begin(), types.end());
  require(!types.empty(), ErrorCode::kNotFound, "no .ckpt files in " + g.checkpoint);
  return types;
}

int run_synth(const Globals& g, const std::string& out, int normal, int anomalous, double duration) {
  SynthConfig sc = SynthConfig::toy();
  sc.normal_per_id = normal;
  sc.anomalous_per_id = anomalous;
  sc.duration_s = duration;
  const DatasetManifest m = synth_corpus(sc, g.seed.value_or(0), out);
  std::cout << "wrote " << m.entries.size() << " clips and " << (fs::path(out) / "manifest.csv").string() << "\n";
  return 0;
}

int run_train(const Globals& g, const std::string& data, const std::string& layout, const std::string& type,
              int stage, const std::string& log_path, bool resume) {
  const Config cfg = load_config(g);
  const DatasetManifest m = open_dataset(data, layout);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    require(static_cast<bool>(log), ErrorCode::kIo, "cannot write " + log_path);
    log << kLossLogHeader << '\n';
  }
  for (const std::string& t : target_types(m, type)) {
    const std::string path = checkpoint_file(g, t, !type.empty());
    Config c = cfg;
    c.train.target_machine_type = t;
    const TrainingSet set = load_training_set(m, t, c.frontend);
    std::optional<Checkpoint> prior;
    if (resume || stage == 2) prior = load_checkpoint(path);
    TrainOptions opt;
    opt.only_stage = stage;
    opt.checkpoint_path = path;
    opt.on_epoch = [&](const LossLogRow& r) {
      std::cout << t << ' ' << format_log_row(r) << std::endl;
      if (log.is_open()) log << format_log_row(r) << '\n';
    };
    Checkpoint ck = train_model(set, c, opt, prior);
    save_checkpoint(path, ck);
    std::cout << "saved " << path << "\n";
  }
  return 0;
}

int run_fit_stats(const Globals& g, const std::string& data, const std::string& layout, const std::string& type,
                  const std::string& validation) {
  const DatasetManifest m = open_dataset(data, layout);
  std::optional<DatasetManifest> val;
  if (!validation.empty()) val = open_dataset(validation, "auto");
  for (const std::string& t : checkpoint_types(g, type)) {
    const std::string path = checkpoint_file(g, t, !type.empty());
    Checkpoint ck = load_checkpoint(path);
    const TrainingSet set = load_training_set(m, t, ck.model.config.frontend);
    std::vector<AudioClip> vclips;
    if (val) {
      for (Split s : {Split::kTrain, Split::kTest}) {
        for (AudioClip& c : load_clips(*val, s, t)) vclips.push_back(std::move(c));
      }
    }
    ck.scorer = fit_scorer(ck.model, set, ck.model.config.scorer, vclips);
    save_checkpoint(path, ck);
    std::cout << t << ": " << ck.scorer->statistics.groups.size() << " id group(s), combination "
              << combination_name(ck.scorer->combination) << "\n";
  }
  return 0;
}

int run_score(const Globals& g, const std::string& data, const std::string& layout, const std::string& type,
              const std::string& out) {
  const std::vector<std::string> types = checkpoint_types(g, type);
  std::vector<Checkpoint> ckpts;
  for (const std::string& t : types) ckpts.push_back(load_checkpoint(checkpoint_file(g, t, !type.empty())));
  const DatasetManifest m = open_dataset(data, layout);
  std::vector<ScoreRow> rows;
  for (Checkpoint& ck : ckpts) {
    require(ck.scorer.has_value(), ErrorCode::kNotFound,
            "checkpoint for '" + ck.model.target_type + "' has no scorer statistics; run fit-stats first");
    std::vector<std::string> paths;
    const std::vector<AudioClip> clips = load_clips(m, Split::kTest, ck.model.target_type, &paths);
    for (ScoreRow& r : score_clips(ck.model, *ck.scorer, clips, paths)) rows.push_back(std::move(r));
  }
  write_score_csv(out, rows);
  std::cout << "wrote " << rows.size() << " scores to " << out << "\n";
  return 0;
}

int run_eval(const std::string& scores, const std::string& data, const std::string& layout, const std::string& out,
             const std::vector<std::string>& kinds) {
  const std::vector<ScoreRow> rows = read_score_csv(scores);
  const DatasetManifest m = open_dataset(data, layout);
  std::vector<std::string> types;
  for (const ScoreRow& r : rows) {
    if (std::find(types.begin(), types.end(), r.machine_type) == types.end()) types.push_back(r.machine_type);
  }
  std::vector<LabeledClip> clips;
  for (const std::string& t : types) {
    for (LabeledClip& c : labeled_test_clips(m, t)) clips.push_back(std::move(c));
  }
  EvalReport report = build_report(rows, clips, kinds.empty() ? report_kinds() : kinds);
  report.snr_tag = m.snr_tag;
  std::cout << report.render_table();
  if (!out.empty()) {
    std::ofstream f(out);
    require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + out);
    f << report.render_csv();
  }
  return 0;
}

int run_viz(const Globals& g, const std::string& data, const std::string& layout, const std::string& type,
            const std::string& out) {
  const Config cfg = load_config(g);
  const DatasetManifest m = open_dataset(data, layout);
  std::vector<TsnePoint> labels;
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index total = 0;
  for (const std::string& t : checkpoint_types(g, type)) {
    Checkpoint ck = load_checkpoint(checkpoint_file(g, t, !type.empty()));
    const std::vector<AudioClip> clips = load_clips(m, Split::kTest, t);
    if (clips.empty()) continue;
    LogMelExtractor ex(ck.model.config.frontend);
    std::vector<LogMelSpectrogram> specs;
    for (const AudioClip& c : clips) {
      specs.push_back(ex.compute(c));
      labels.push_back({c.machine_type, c.machine_id, c.condition == Condition::kAnomalous});
    }
    std::vector<const LogMelSpectrogram*> ptr;
    for (const auto& s : specs) ptr.push_back(&s);
    blocks.push_back(embed_spectrograms(ck.model, ptr));
    total += blocks.back().rows();
  }
  require(total > 0, ErrorCode::kNotFound, "no test clips to visualize");
  Eigen::MatrixXd emb(total, blocks.front().cols());
  Eigen::Index row = 0;
  for (const auto& b : blocks) {
    emb.middleRows(row, b.rows()) = b;
    row += b.rows();
  }
  emit_tsne_plot(emb, labels, out, cfg.tsne);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask-learning anomalous sound detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Key-value config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "Base configuration: full or tiny");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--checkpoint", g.checkpoint, "Checkpoint file, or directory of <type>.ckpt files");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  std::string data, layout = "auto", type, out, log_path, validation, scores;
  int stage = 0;
  int normal = 20, anomalous = 10;
  double duration = 10.0;
  bool resume = false;
  std::vector<std::string> kinds;

  auto* synth = app.add_subcommand("synth", "Write a synthetic machine-sound corpus");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--normal-per-id", normal, "Normal clips per machine id");
  synth->add_option("--anomalous-per-id", anomalous, "Anomalous clips per machine id");
  synth->add_option("--duration", duration, "Clip length in seconds");

  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", data, "Manifest CSV, directory with manifest.csv, or mimii tree")->required();
    sub->add_option("--layout", layout, "auto, mimii, flat_csv, or csv");
  };
  auto* train = app.add_subcommand("train", "Two-stage training");
  add_data(train);
  train->add_option("--target-type", type, "Machine type to train; all types when omitted");
  train->add_option("--stage", stage, "Run only stage 1 or 2")->check(CLI::Range(0, 2));
  train->add_option("--log", log_path, "Write the epoch log CSV here");
  train->add_flag("--resume", resume, "Continue from the checkpoint's saved progress");

  auto* fit = app.add_subcommand("fit-stats", "Fit normal statistics, standardization, and score combination");
  add_data(fit);
  fit->add_option("--target-type", type, "Machine type");
  fit->add_option("--validation", validation, "Labeled validation manifest used to pick the combination");

  auto* score = app.add_subcommand("score", "Score the test split");
  add_data(score);
  score->add_option("--target-type", type, "Machine type");
  score->add_option("--out", out, "Score CSV")->required();

  auto* eval = app.add_subcommand("eval", "AUC report from a score CSV");
  eval->add_option("--scores", scores, "Score CSV")->required();
  add_data(eval);
  eval->add_option("--out", out, "Report CSV");
  eval->add_option("--kinds", kinds, "Score kinds to report (out, arc, maha, combined)");

  auto* viz = app.add_subcommand("viz", "t-SNE scatter of test embeddings (SVG)");
  add_data(viz);
  viz->add_option("--target-type", type, "Machine type");
  viz->add_option("--out", out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    std::cerr << app.help();
    return 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*synth) return run_synth(g, out, normal, anomalous, duration);
    if (*train) return run_train(g, data, layout, type, stage, log_path, resume);
    if (*fit) return run_fit_stats(g, data, layout, type, validation);
    if (*score) return run_score(g, data, layout, type, out);
    if (*eval) return run_eval(scores, data, layout, out, kinds);
    if (*viz) return run_viz(g, data, layout, type, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
