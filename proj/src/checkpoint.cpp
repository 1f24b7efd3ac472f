// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "mtlasd/error.hpp"

namespace mtlasd {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "mtlasd-checkpoint";

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data(m.data(), m.data() + m.size());  // column-major
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"), ErrorCode::kFormat,
          "checkpoint: malformed tensor " + what);
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(rows >= 0 && cols >= 0 && static_cast<Eigen::Index>(data.size()) == rows * cols, ErrorCode::kFormat,
          "checkpoint: tensor " + what + " has inconsistent size");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json scorer_to_json(const ScorerState& s) {
  json groups = json::array();
  for (const auto& [key, g] : s.statistics.groups) {
    groups.push_back({{"machine_type", key.first},
                      {"machine_id", key.second},
                      {"mean", vector_to_json(g.mean)},
                      {"covariance", matrix_to_json(g.covariance)},
                      {"epsilon", g.epsilon},
                      {"count", g.count}});
  }
  json standard = json::array();
  for (const auto& [key, params] : s.standardization.groups) {
    json kinds = json::object();
    for (ScoreKind k : kScoreKinds) {
      const Standardizer& p = params[static_cast<std::size_t>(k)];
      kinds[score_kind_name(k)] = {{"mean", p.mean}, {"std", p.std}};
    }
    standard.push_back({{"machine_type", key.first}, {"machine_id", key.second}, {"kinds", kinds}});
  }
  return {{"statistics", groups},
          {"standardization", standard},
          {"combination", combination_name(s.combination)},
          {"cov_reg_rel", s.config.cov_reg_rel},
          {"cov_reg_floor", s.config.cov_reg_floor},
          {"std_floor", s.config.std_floor}};
}

ScorerState scorer_from_json(const json& j) {
  ScorerState s;
  s.config.cov_reg_rel = j.at("cov_reg_rel").get<double>();
  s.config.cov_reg_floor = j.at("cov_reg_floor").get<double>();
  s.config.std_floor = j.at("std_floor").get<double>();
  for (const json& g : j.at("statistics")) {
    GroupKey key{g.at("machine_type").get<std::string>(), g.at("machine_id").get<int>()};
    GroupStatistics st;
    st.mean = vector_from_json(g.at("mean"));
    st.covariance = matrix_from_json(g.at("covariance"), "scorer covariance");
    require(st.covariance.rows() == st.mean.size() && st.covariance.cols() == st.mean.size(), ErrorCode::kFormat,
            "checkpoint: covariance shape does not match its mean");
    st.epsilon = g.at("epsilon").get<double>();
    st.count = g.at("count").get<int>();
    st.factorize();
    s.statistics.groups.emplace(key, std::move(st));
  }
  for (const json& g : j.at("standardization")) {
    GroupKey key{g.at("machine_type").get<std::string>(), g.at("machine_id").get<int>()};
    std::array<Standardizer, 3> params;
    for (ScoreKind k : kScoreKinds) {
      const json& p = g.at("kinds").at(score_kind_name(k));
      params[static_cast<std::size_t>(k)] = {p.at("mean").get<double>(), p.at("std").get<double>()};
    }
    s.standardization.groups.emplace(key, params);
  }
  s.combination = parse_combination(j.at("combination").get<std::string>());
  return s;
}

}  // namespace

std::string format_log_row(const LossLogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g", r.epoch, r.stage, r.l_type, r.l_id, r.l_aug,
                r.total);
  return buf;
}

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  Model& m = ckpt.model;
  json tensors = json::object();
  for (nn::Parameter* p : m.parameters()) tensors[p->name] = matrix_to_json(p->value);

  json doc;
  doc["format"] = kFormatTag;
  doc["version"] = kCheckpointVersion;
  doc["config"] = m.config.to_key_values();
  doc["target_type"] = m.target_type;
  doc["machine_ids"] = m.machine_ids;
  doc["encoder"] = {{"n_blocks", m.config.encoder.n_blocks}, {"model_dim", m.config.encoder.model_dim}};
  doc["arcface_head"] = {{"K", m.arcface.classes()}, {"s", m.arcface.scale}, {"m", m.arcface.margin}};
  doc["type_head"] = {{"dim", m.type_head.weight.value.cols()}};
  doc["aug_head"] = {{"classes", m.aug_head.classes()}};
  doc["tensors"] = std::move(tensors);
  doc["train_state"] = {{"stage", ckpt.train.stage}, {"next_epoch", ckpt.train.next_epoch}, {"seed", ckpt.train.seed}};
  if (ckpt.optimizer) {
    json moments = json::object();
    for (const auto& [name, mo] : ckpt.optimizer->moments) {
      moments[name] = {{"first", matrix_to_json(mo.first)}, {"second", matrix_to_json(mo.second)}};
    }
    doc["optimizer"] = {{"kind", "adam"}, {"steps", ckpt.optimizer->steps}, {"moments", std::move(moments)}};
  }
  json log = json::array();
  for (const LossLogRow& r : ckpt.log) log.push_back({r.epoch, r.stage, r.l_type, r.l_id, r.l_aug, r.total});
  doc["log"] = std::move(log);
  if (ckpt.scorer) doc["scorer"] = scorer_to_json(*ckpt.scorer);

  const std::vector<std::uint8_t> bytes = json::to_cbor(doc);
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  require(!ec, ErrorCode::kIo, "cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "checkpoint not found: " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "checkpoint " + path + " is not readable: " + e.what());
  }
  require(doc.is_object() && doc.value("format", "") == kFormatTag, ErrorCode::kFormat,
          path + " is not an mtlasd checkpoint");
  const int version = doc.value("version", -1);
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");

  try {
    Config cfg = Config::full();
    cfg.apply(doc.at("config").get<KeyValues>());
    Checkpoint ckpt;
    ckpt.model = Model::create(cfg, doc.at("target_type").get<std::string>(),
                               doc.at("machine_ids").get<std::vector<int>>(), 0);
    Model& m = ckpt.model;
    const json& heads = doc.at("arcface_head");
    require(heads.at("K").get<int>() == m.arcface.classes(), ErrorCode::kFormat,
            "checkpoint: arcface class count disagrees with machine ids");
    m.arcface.scale = heads.at("s").get<double>();
    m.arcface.margin = heads.at("m").get<double>();

    const json& tensors = doc.at("tensors");
    for (nn::Parameter* p : m.parameters()) {
      require(tensors.contains(p->name), ErrorCode::kFormat, "checkpoint: missing tensor " + p->name);
      Eigen::MatrixXd v = matrix_from_json(tensors.at(p->name), p->name);
      require(v.rows() == p->value.rows() && v.cols() == p->value.cols(), ErrorCode::kShapeMismatch,
              "checkpoint: tensor " + p->name + " is " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                  ", config expects " + std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
      p->value = std::move(v);
    }

    const json& ts = doc.at("train_state");
    ckpt.train.stage = ts.at("stage").get<int>();
    ckpt.train.next_epoch = ts.at("next_epoch").get<int>();
    ckpt.train.seed = ts.at("seed").get<std::uint64_t>();
    if (doc.contains("optimizer")) {
      AdamState st;
      st.steps = doc["optimizer"].at("steps").get<long>();
      for (const auto& [name, mo] : doc["optimizer"].at("moments").items()) {
        st.moments[name] = {matrix_from_json(mo.at("first"), name), matrix_from_json(mo.at("second"), name)};
      }
      ckpt.optimizer = std::move(st);
    }
    for (const json& r : doc.at("log")) {
      ckpt.log.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<double>(), r.at(3).get<double>(),
                          r.at(4).get<double>(), r.at(5).get<double>()});
    }
    if (doc.contains("scorer")) ckpt.scorer = scorer_from_json(doc["scorer"]);
    return ckpt;
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "checkpoint " + path + " is malformed: " + e.what());
  }
}

}  // namespace mtlasd
