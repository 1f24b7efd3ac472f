// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mtlasd/error.hpp"

namespace mtlasd {

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorCode::kShapeMismatch, "compute_auc: score/label count differ");
  long long np = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]), ErrorCode::kNonFinite, "compute_auc: non-finite score");
    require(labels[i] == 0 || labels[i] == 1, ErrorCode::kInvalidArgument, "compute_auc: labels must be 0 or 1");
    np += labels[i];
  }
  const long long n = static_cast<long long>(scores.size());
  const long long nn = n - np;
  require(np > 0 && nn > 0, ErrorCode::kInvalidArgument, "compute_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of anomalies; a tie block over 0-based positions [i, j)
  // shares the doubled average rank i + 1 + j, so everything stays integral.
  long long rank2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    long long pos = 0;
    for (std::size_t k = i; k < j; ++k) pos += labels[order[k]];
    rank2 += pos * static_cast<long long>(i + 1 + j);
    i = j;
  }
  // 2U = 2 * wins + ties.
  const long long u2 = rank2 - np * (np + 1);
  return (static_cast<double>(u2) * 0.5) / static_cast<double>(np * nn);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v, const char* f = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == s.size() && !s.empty(), ErrorCode::kFormat, "bad number '" + s + "' in " + what);
  return v;
}

}  // namespace

std::vector<ScoreRow> read_score_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "score file not found: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat, "empty score file: " + path);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected = {"path", "machine_type", "machine_id", "a_out", "a_arc", "a_maha", "combined"};
  require(header == expected, ErrorCode::kFormat, "score file header must be " + std::string("path,machine_type,machine_id,a_out,a_arc,a_maha,combined"));
  std::vector<ScoreRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    require(f.size() == expected.size(), ErrorCode::kFormat, "wrong field count at " + where);
    ScoreRow r;
    r.path = f[0];
    r.machine_type = f[1];
    r.machine_id = static_cast<int>(parse_double(f[2], where));
    r.a_out = parse_double(f[3], where);
    r.a_arc = parse_double(f[4], where);
    r.a_maha = parse_double(f[5], where);
    r.combined = parse_double(f[6], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out << "path,machine_type,machine_id,a_out,a_arc,a_maha,combined\n";
  for (const ScoreRow& r : rows) {
    out << csv_field(r.path) << ',' << csv_field(r.machine_type) << ',' << r.machine_id << ',' << fmt(r.a_out)
        << ',' << fmt(r.a_arc) << ',' << fmt(r.a_maha) << ',' << fmt(r.combined) << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path);
}

namespace {

double kind_score(const ScoreRow& r, const std::string& kind) {
  if (kind == "out") return r.a_out;
  if (kind == "arc") return r.a_arc;
  if (kind == "maha") return r.a_maha;
  if (kind == "combined") return r.combined;
  fail(ErrorCode::kInvalidArgument, "unknown score kind '" + kind + "'");
}

}  // namespace

EvalReport build_report(const std::vector<ScoreRow>& scores, const std::vector<LabeledClip>& clips,
                        const std::vector<std::string>& kinds) {
  require(!kinds.empty(), ErrorCode::kInvalidArgument, "report needs at least one score kind");
  std::map<std::string, const ScoreRow*> by_path;
  for (const ScoreRow& r : scores) by_path[r.path] = &r;

  std::vector<std::string> missing;
  using Key = std::pair<std::string, int>;
  std::map<Key, std::vector<std::pair<const ScoreRow*, int>>> groups;
  for (const LabeledClip& c : clips) {
    const auto it = by_path.find(c.path);
    if (it == by_path.end()) {
      missing.push_back(c.path);
      continue;
    }
    groups[{c.machine_type, c.machine_id}].emplace_back(it->second, c.anomalous);
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " test clip(s) have no score:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    fail(ErrorCode::kNotFound, msg);
  }

  EvalReport report;
  report.kinds = kinds;
  std::map<std::string, std::map<std::string, std::vector<double>>> per_type;
  for (const auto& [key, members] : groups) {
    EvalReport::IdRow row{key.first, key.second, {}};
    std::vector<int> labels;
    for (const auto& m : members) labels.push_back(m.second);
    const int anomalies = std::accumulate(labels.begin(), labels.end(), 0);
    if (anomalies == 0 || anomalies == static_cast<int>(labels.size())) continue;
    for (const std::string& kind : kinds) {
      std::vector<double> s;
      for (const auto& m : members) s.push_back(kind_score(*m.first, kind));
      row.auc[kind] = compute_auc(s, labels);
      per_type[key.first][kind].push_back(row.auc[kind]);
    }
    report.ids.push_back(std::move(row));
  }
  for (const std::string& kind : kinds) {
    std::vector<double> means;
    for (auto& [type, by_kind] : per_type) {
      const auto& v = by_kind[kind];
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      report.type_mean[type][kind] = mean;
      means.push_back(mean);
    }
    if (!means.empty()) {
      report.overall[kind] = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    }
  }
  return report;
}

namespace {

std::string cell(const std::map<std::string, double>& m, const std::string& kind) {
  const auto it = m.find(kind);
  return it == m.end() ? "-" : fmt(100.0 * it->second, "%.2f");
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

}  // namespace

std::string EvalReport::render_table() const {
  std::ostringstream out;
  // Standard columns always print; kinds that were not evaluated show as "-".
  std::vector<std::string> columns = report_kinds();
  for (const auto& k : kinds) {
    if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
  }
  const std::size_t w0 = 14;
  const std::size_t w1 = 8;
  const std::size_t wk = 10;
  out << "AUC [%]";
  if (snr_tag) out << " (" << *snr_tag << ")";
  out << '\n' << pad("machine_type", w0, true) << pad("id", w1);
  for (const auto& k : columns) out << pad(k, wk);
  out << '\n';
  std::string last_type;
  auto type_line = [&](const std::string& type) {
    out << pad(type, w0, true) << pad("mean", w1);
    for (const auto& k : columns) out << pad(cell(type_mean.at(type), k), wk);
    out << '\n';
  };
  for (const IdRow& r : ids) {
    if (!last_type.empty() && r.machine_type != last_type) type_line(last_type);
    last_type = r.machine_type;
    out << pad(r.machine_type, w0, true) << pad(fmt(r.machine_id, "%02.0f"), w1);
    for (const auto& k : columns) out << pad(cell(r.auc, k), wk);
    out << '\n';
  }
  if (!last_type.empty()) type_line(last_type);
  out << pad("all", w0, true) << pad("mean", w1);
  for (const auto& k : columns) out << pad(cell(overall, k), wk);
  out << '\n';
  return out.str();
}

std::string EvalReport::render_csv() const {
  std::ostringstream out;
  out << "machine_type,machine_id,kind,auc\n";
  for (const IdRow& r : ids) {
    for (const auto& k : kinds) {
      const auto it = r.auc.find(k);
      if (it != r.auc.end()) out << csv_field(r.machine_type) << ',' << r.machine_id << ',' << k << ',' << fmt(it->second) << '\n';
    }
  }
  for (const auto& [type, by_kind] : type_mean) {
    for (const auto& k : kinds) {
      const auto it = by_kind.find(k);
      if (it != by_kind.end()) out << csv_field(type) << ",mean," << k << ',' << fmt(it->second) << '\n';
    }
  }
  for (const auto& k : kinds) {
    const auto it = overall.find(k);
    if (it != overall.end()) out << "all,mean," << k << ',' << fmt(it->second) << '\n';
  }
  return out.str();
}

}  // namespace mtlasd
