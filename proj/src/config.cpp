// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "mtlasd/error.hpp"

namespace mtlasd {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::kFormat, "config key '" + key + "' expects a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::kFormat, "config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::kFormat, "config key '" + key + "' expects an unsigned 64-bit integer, got '" + v + "'");
  }
  return out;
}

int to_int32(const std::string& key, const std::string& v) {
  const long long out = to_int(key, v);
  if (out < std::numeric_limits<int>::min() || out > std::numeric_limits<int>::max()) {
    fail(ErrorCode::kFormat, "config key '" + key + "' value " + v + " is out of range");
  }
  return static_cast<int>(out);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(ErrorCode::kFormat, "config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int32(key, item));
  }
  return out;
}

// Binds every config field to a key name so parsing and formatting share one table.
struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::map<std::string, Field> field_table(Config& c) {
  std::map<std::string, Field> t;
  auto dbl = [&t](const std::string& k, double& ref) {
    t[k] = {[&ref, k](const std::string& v) { ref = to_double(k, v); }, [&ref] { return num(ref); }};
  };
  auto integer = [&t](const std::string& k, int& ref) {
    t[k] = {[&ref, k](const std::string& v) { ref = to_int32(k, v); },
            [&ref] { return std::to_string(ref); }};
  };
  auto boolean = [&t](const std::string& k, bool& ref) {
    t[k] = {[&ref, k](const std::string& v) { ref = to_bool(k, v); },
            [&ref] { return std::string(ref ? "true" : "false"); }};
  };

  // Frontend keys are unprefixed.
  integer("sample_rate", c.frontend.sample_rate);
  integer("fft_size", c.frontend.fft_size);
  integer("hop", c.frontend.hop);
  integer("n_mels", c.frontend.n_mels);
  dbl("fmin", c.frontend.fmin);
  dbl("fmax", c.frontend.fmax);
  dbl("log_floor", c.frontend.log_floor);
  boolean("center", c.frontend.center);
  boolean("normalize", c.frontend.normalize);

  dbl("augment.pitch_semitones", c.augment.pitch_semitones);
  dbl("augment.time_shift_max_s", c.augment.time_shift_max_s);
  dbl("augment.stretch_min", c.augment.stretch_min);
  dbl("augment.stretch_max", c.augment.stretch_max);
  dbl("augment.fade_min_frac", c.augment.fade_min_frac);
  dbl("augment.fade_max_frac", c.augment.fade_max_frac);
  dbl("augment.noise_snr_min_db", c.augment.noise_snr_min_db);
  dbl("augment.noise_snr_max_db", c.augment.noise_snr_max_db);
  integer("augment.time_mask_max", c.augment.time_mask_max);
  integer("augment.freq_mask_max", c.augment.freq_mask_max);
  boolean("augment.enabled", c.augment.enabled);
  boolean("augment.feeds_primary_losses", c.augment.feeds_primary_losses);
  {
    auto& kinds = c.augment.kinds;
    t["augment.kinds"] = {[&kinds](const std::string& v) { kinds = split_ints("augment.kinds", v); },
                          [&kinds] { return join_ints(kinds); }};
  }

  integer("encoder.input_dim", c.encoder.input_dim);
  integer("encoder.n_blocks", c.encoder.n_blocks);
  integer("encoder.model_dim", c.encoder.model_dim);
  integer("encoder.ffn_units", c.encoder.ffn_units);
  integer("encoder.attention_heads", c.encoder.attention_heads);
  integer("encoder.conv_kernel", c.encoder.conv_kernel);
  integer("encoder.pooled_dim", c.encoder.pooled_dim);
  integer("encoder.pool_attention_dim", c.encoder.pool_attention_dim);
  dbl("encoder.dropout", c.encoder.dropout);
  boolean("encoder.positional_encoding", c.encoder.positional_encoding);
  {
    auto& norm = c.encoder.conv_norm;
    t["encoder.conv_norm"] = {
        [&norm](const std::string& v) {
          if (v == "batch") norm = ConvNorm::kBatch;
          else if (v == "layer") norm = ConvNorm::kLayer;
          else fail(ErrorCode::kFormat, "encoder.conv_norm must be 'batch' or 'layer'");
        },
        [&norm] { return std::string(norm == ConvNorm::kBatch ? "batch" : "layer"); }};
  }

  dbl("heads.arc_scale", c.heads.arc_scale);
  dbl("heads.arc_margin", c.heads.arc_margin);
  integer("heads.aug_classes", c.heads.aug_classes);
  dbl("heads.alpha", c.heads.alpha);
  dbl("heads.beta", c.heads.beta);
  boolean("heads.aug_in_stage1", c.heads.aug_in_stage1);
  {
    auto& red = c.heads.reduction;
    t["heads.reduction"] = {
        [&red](const std::string& v) {
          if (v == "sum") red = Reduction::kSum;
          else if (v == "mean") red = Reduction::kMean;
          else fail(ErrorCode::kFormat, "heads.reduction must be 'sum' or 'mean'");
        },
        [&red] { return std::string(red == Reduction::kSum ? "sum" : "mean"); }};
  }

  integer("train.stage1_epochs", c.train.stage1_epochs);
  integer("train.stage2_epochs", c.train.stage2_epochs);
  integer("train.batch_size", c.train.batch_size);
  dbl("train.learning_rate", c.train.learning_rate);
  dbl("train.adam_beta1", c.train.adam_beta1);
  dbl("train.adam_beta2", c.train.adam_beta2);
  dbl("train.adam_eps", c.train.adam_eps);
  boolean("train.reset_optimizer_between_stages", c.train.reset_optimizer_between_stages);
  dbl("train.grad_clip_norm", c.train.grad_clip_norm);
  integer("train.checkpoint_every", c.train.checkpoint_every);
  {
    auto& seed = c.train.seed;
    t["train.seed"] = {[&seed](const std::string& v) {
                         seed = to_seed("train.seed", v);
                       },
                       [&seed] { return std::to_string(seed); }};
    auto& target = c.train.target_machine_type;
    t["train.target_machine_type"] = {[&target](const std::string& v) { target = v; },
                                      [&target] { return target; }};
  }

  dbl("scorer.cov_reg_rel", c.scorer.cov_reg_rel);
  dbl("scorer.cov_reg_floor", c.scorer.cov_reg_floor);
  dbl("scorer.std_floor", c.scorer.std_floor);

  dbl("tsne.perplexity", c.tsne.perplexity);
  integer("tsne.iterations", c.tsne.iterations);
  {
    auto& seed = c.tsne.seed;
    t["tsne.seed"] = {[&seed](const std::string& v) {
                        seed = to_seed("tsne.seed", v);
                      },
                      [&seed] { return std::to_string(seed); }};
  }
  return t;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto sep = line.find('=');
    if (sep == std::string::npos) sep = line.find(':');
    if (sep == std::string::npos) {
      fail(ErrorCode::kFormat, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, sep));
    if (key.empty()) fail(ErrorCode::kFormat, "config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(sep + 1));
  }
  return kv;
}

KeyValues read_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

void FrontendConfig::validate() const {
  require(sample_rate == 16000, ErrorCode::kInvalidArgument, "only 16 kHz audio is supported");
  require(fft_size > 0 && (fft_size & (fft_size - 1)) == 0, ErrorCode::kInvalidArgument,
          "fft_size must be a power of two");
  require(hop > 0, ErrorCode::kInvalidArgument, "hop must be positive");
  require(n_mels > 0, ErrorCode::kInvalidArgument, "n_mels must be positive");
  require(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0, ErrorCode::kInvalidArgument,
          "need 0 <= fmin < fmax <= sample_rate/2");
  require(log_floor > 0.0, ErrorCode::kInvalidArgument, "log_floor must be positive");
}

void AugmentConfig::validate() const {
  require(pitch_semitones >= 0.0, ErrorCode::kInvalidArgument, "augment.pitch_semitones < 0");
  require(time_shift_max_s >= 0.0, ErrorCode::kInvalidArgument, "augment.time_shift_max_s < 0");
  require(stretch_min > 0.0 && stretch_min <= stretch_max, ErrorCode::kInvalidArgument,
          "augment stretch range invalid");
  require(fade_min_frac > 0.0 && fade_min_frac <= fade_max_frac && fade_max_frac <= 1.0,
          ErrorCode::kInvalidArgument, "augment fade range invalid");
  require(noise_snr_min_db <= noise_snr_max_db, ErrorCode::kInvalidArgument,
          "augment noise SNR range invalid");
  require(time_mask_max >= 1 && freq_mask_max >= 1, ErrorCode::kInvalidArgument,
          "augment mask widths must be >= 1");
  for (int k : kinds) {
    require(k >= 0 && k < 9, ErrorCode::kInvalidArgument, "augment.kinds entries must be in [0, 9)");
  }
}

void EncoderConfig::validate() const {
  require(input_dim > 0 && n_blocks >= 0 && model_dim > 0 && ffn_units > 0 && pooled_dim > 0 &&
              pool_attention_dim > 0,
          ErrorCode::kInvalidArgument, "encoder dimensions must be positive");
  require(attention_heads > 0 && model_dim % attention_heads == 0, ErrorCode::kInvalidArgument,
          "model_dim must be divisible by attention_heads");
  require(conv_kernel > 0 && conv_kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "conv_kernel must be a positive odd integer");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kInvalidArgument, "dropout must be in [0,1)");
  require(!positional_encoding, ErrorCode::kInvalidArgument,
          "positional encoding is not supported by this encoder");
}

void HeadConfig::validate() const {
  require(arc_scale > 0.0, ErrorCode::kInvalidArgument, "arc_scale must be > 0");
  require(arc_margin >= 0.0 && arc_margin < M_PI, ErrorCode::kInvalidArgument,
          "arc_margin must lie in [0, pi)");
  require(aug_classes == 9, ErrorCode::kInvalidArgument, "aug_classes must match the 9 augmentation ids");
  require(alpha >= 0.0 && beta >= 0.0, ErrorCode::kInvalidArgument, "loss weights must be >= 0");
}

void TrainConfig::validate() const {
  require(stage1_epochs >= 0 && stage2_epochs >= 0, ErrorCode::kInvalidArgument, "epochs must be >= 0");
  require(batch_size >= 2 && batch_size % 2 == 0, ErrorCode::kInvalidArgument,
          "batch_size must be an even number >= 2");
  require(learning_rate > 0.0, ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  require(grad_clip_norm >= 0.0, ErrorCode::kInvalidArgument, "grad_clip_norm must be >= 0");
}

Config Config::full() { return Config{}; }

Config Config::tiny() {
  Config c;
  c.encoder.n_blocks = 1;
  c.encoder.model_dim = 16;
  c.encoder.ffn_units = 64;
  c.encoder.attention_heads = 4;
  c.encoder.pool_attention_dim = 16;
  c.train.stage1_epochs = 15;
  c.train.stage2_epochs = 10;
  return c;
}

Config Config::preset(const std::string& name) {
  if (name == "full" || name == "default") return full();
  if (name == "tiny") return tiny();
  fail(ErrorCode::kInvalidArgument, "unknown preset '" + name + "' (expected full|tiny)");
}

void Config::apply(const KeyValues& kv) {
  auto table = field_table(*this);
  for (const auto& [k, v] : kv) {
    auto it = table.find(k);
    if (it == table.end()) fail(ErrorCode::kFormat, "unknown config key '" + k + "'");
    it->second.set(v);
  }
}

KeyValues Config::to_key_values() const {
  auto& self = const_cast<Config&>(*this);
  KeyValues kv;
  for (const auto& [k, f] : field_table(self)) kv[k] = f.get();
  return kv;
}

void Config::validate() const {
  frontend.validate();
  augment.validate();
  encoder.validate();
  heads.validate();
  train.validate();
  require(encoder.input_dim == frontend.n_mels, ErrorCode::kInvalidArgument,
          "encoder.input_dim must equal n_mels");
}

}  // namespace mtlasd
