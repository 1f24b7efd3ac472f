// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "mtlasd/error.hpp"

namespace fs = std::filesystem;

namespace mtlasd {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<std::string> detect_snr(const fs::path& root) {
  static const std::regex re(R"((-?\d+)_?dB)");
  for (const auto& part : fs::absolute(root).lexically_normal()) {
    std::smatch m;
    const std::string s = part.string();
    if (std::regex_search(s, m, re)) {
      const std::string tag = m[1].str() + "dB";
      if (tag == "-6dB" || tag == "0dB" || tag == "6dB") return tag;
    }
  }
  return std::nullopt;
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

DatasetManifest load_mimii(const fs::path& root) {
  static const std::regex id_re(R"(id_(\d+))");
  DatasetManifest m;
  m.snr_tag = detect_snr(root);
  for (const auto& type_dir : sorted_children(root)) {
    if (!fs::is_directory(type_dir)) continue;
    const std::string type = type_dir.filename().string();
    for (const auto& id_dir : sorted_children(type_dir)) {
      if (!fs::is_directory(id_dir)) continue;
      std::smatch match;
      const std::string id_name = id_dir.filename().string();
      if (!std::regex_match(id_name, match, id_re)) {
        ++m.skipped;
        m.warnings.push_back("skipped directory " + id_dir.string());
        continue;
      }
      const int id = std::stoi(match[1].str());
      std::vector<std::string> normals, anomalies;
      for (const auto& cond_dir : sorted_children(id_dir)) {
        if (!fs::is_directory(cond_dir)) continue;
        const std::string cname = cond_dir.filename().string();
        std::vector<std::string>* bucket = cname == "normal" ? &normals
                                           : cname == "abnormal" ? &anomalies
                                                                 : nullptr;
        if (bucket == nullptr) {
          ++m.skipped;
          m.warnings.push_back("skipped directory " + cond_dir.string());
          continue;
        }
        for (const auto& f : sorted_children(cond_dir)) {
          if (fs::is_regular_file(f) && f.extension() == ".wav") {
            bucket->push_back(f.string());
          } else {
            ++m.skipped;
            m.warnings.push_back("skipped file " + f.string());
          }
        }
      }
      const int held_out =
          mimii_test_normal_count(static_cast<int>(normals.size()), static_cast<int>(anomalies.size()));
      for (std::size_t i = 0; i < normals.size(); ++i) {
        m.entries.push_back({normals[i], type, id, Condition::kNormal,
                             static_cast<int>(i) < held_out ? Split::kTest : Split::kTrain});
      }
      for (const auto& p : anomalies) m.entries.push_back({p, type, id, Condition::kAnomalous, Split::kTest});
    }
  }
  std::sort(m.entries.begin(), m.entries.end());
  return m;
}

}  // namespace

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  fail(ErrorCode::kFormat, "unknown split '" + s + "'");
}

ManifestLayout parse_layout(const std::string& s) {
  if (s == "mimii") return ManifestLayout::kMimii;
  if (s == "flat_csv") return ManifestLayout::kFlatCsv;
  fail(ErrorCode::kInvalidArgument, "unknown manifest layout '" + s + "' (expected mimii|flat_csv)");
}

int mimii_test_normal_count(int num_normal, int num_anomalous) {
  return std::max(0, std::min(num_anomalous, num_normal - 2));
}

std::vector<std::string> DatasetManifest::machine_types() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.machine_type);
  return {s.begin(), s.end()};
}

std::vector<int> DatasetManifest::machine_ids(const std::string& type) const {
  std::set<int> s;
  for (const auto& e : entries) {
    if (e.machine_type == type) s.insert(e.machine_id);
  }
  return {s.begin(), s.end()};
}

std::size_t DatasetManifest::count(Split split, Condition cond) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
    return e.split == split && e.condition == cond;
  }));
}

std::vector<ManifestEntry> DatasetManifest::select(Split split, const std::string& type) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split && (type.empty() || e.machine_type == type)) out.push_back(e);
  }
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::pair<std::string, int>> train_pairs;
  for (const auto& e : entries) {
    if (e.split == Split::kTrain) {
      require(e.condition == Condition::kNormal, ErrorCode::kInvalidArgument,
              "training split holds a non-normal clip: " + e.path);
      train_pairs.insert({e.machine_type, e.machine_id});
    }
  }
  for (const auto& e : entries) {
    if (e.split == Split::kTest) {
      require(train_pairs.count({e.machine_type, e.machine_id}) > 0, ErrorCode::kInvalidArgument,
              "test clip " + e.path + " has no training data for " + e.machine_type + " id " +
                  std::to_string(e.machine_id));
    }
  }
}

DatasetManifest load_manifest(const std::string& root_dir, ManifestLayout layout) {
  const fs::path root(root_dir);
  if (!fs::is_directory(root)) fail(ErrorCode::kNotFound, "dataset directory not found: " + root_dir);
  if (layout == ManifestLayout::kMimii) return load_mimii(root);
  DatasetManifest m = read_manifest_csv((root / "manifest.csv").string());
  if (!m.snr_tag) m.snr_tag = detect_snr(root);
  return m;
}

void write_manifest_csv(const DatasetManifest& manifest, const std::string& csv_path) {
  const fs::path base = fs::absolute(fs::path(csv_path)).parent_path();
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write manifest " + csv_path);
  out << "path,machine_type,machine_id,condition,split\n";
  for (const auto& e : manifest.entries) {
    std::string p = e.path;
    const fs::path abs = fs::absolute(fs::path(e.path)).lexically_normal();
    const fs::path rel = abs.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") p = rel.generic_string();
    out << csv_quote(p) << ',' << csv_quote(e.machine_type) << ',' << e.machine_id << ','
        << condition_name(e.condition) << ',' << split_name(e.split) << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "short write to " + csv_path);
}

DatasetManifest read_manifest_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) fail(ErrorCode::kNotFound, "manifest not found: " + csv_path);
  const fs::path base = fs::path(csv_path).parent_path();
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kFormat, csv_path + ": empty manifest (header required)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"path", "machine_type", "machine_id", "condition", "split"}) {
    if (!col.count(name)) fail(ErrorCode::kFormat, csv_path + ": missing column '" + name + "'");
  }
  DatasetManifest m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    try {
      if (cells.size() < header.size()) throw Error(ErrorCode::kFormat, "too few columns");
      ManifestEntry e;
      fs::path p(cells[col["path"]]);
      e.path = p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
      e.machine_type = cells[col["machine_type"]];
      e.machine_id = std::stoi(cells[col["machine_id"]]);
      e.condition = parse_condition(cells[col["condition"]]);
      e.split = parse_split(cells[col["split"]]);
      m.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      ++m.skipped;
      m.warnings.push_back(csv_path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  std::sort(m.entries.begin(), m.entries.end());
  return m;
}

}  // namespace mtlasd
