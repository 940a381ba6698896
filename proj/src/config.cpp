/*
 * Copyright 2026 The Bitleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "bitleak/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "bitleak/error.hpp"
#include "bitleak/textio.hpp"

namespace bitleak {

namespace {

// Minimal TOML value: scalars and flat arrays of scalars.
struct TomlValue {
  enum class Kind { Str, Num, Bool, Arr } kind = Kind::Str;
  std::string str;
  double num = 0.0;
  bool boolean = false;
  std::vector<TomlValue> arr;
  std::size_t line = 0;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strips a trailing comment, respecting double-quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_scalar(const std::string& raw, std::size_t line_no) {
  TomlValue v;
  v.line = line_no;
  std::string s = trim(raw);
  if (s.empty()) {
    throw ConfigError("line " + std::to_string(line_no) + ": empty value");
  }
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": unterminated string");
    }
    v.kind = TomlValue::Kind::Str;
    v.str = s.substr(1, s.size() - 2);
    return v;
  }
  if (s == "true" || s == "false") {
    v.kind = TomlValue::Kind::Bool;
    v.boolean = s == "true";
    return v;
  }
  double num = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), num);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("line " + std::to_string(line_no) +
                      ": cannot parse value '" + s + "'");
  }
  v.kind = TomlValue::Kind::Num;
  v.num = num;
  return v;
}

TomlValue parse_value(const std::string& raw, std::size_t line_no) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": unterminated array");
    }
    TomlValue v;
    v.kind = TomlValue::Kind::Arr;
    v.line = line_no;
    std::string body = s.substr(1, s.size() - 2);
    std::string item;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        v.arr.push_back(parse_scalar(item, line_no));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) v.arr.push_back(parse_scalar(item, line_no));
    return v;
  }
  return parse_scalar(s, line_no);
}

using Section = std::map<std::string, TomlValue>;
using Document = std::map<std::string, Section>;

Document parse_toml(const std::string& text) {
  Document doc;
  std::string current = "";
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string line = trim(strip_comment(text.substr(start, end - start)));
    start = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": empty section name");
      }
      doc[current];  // sections may legally be empty
    } else {
      std::size_t eq = line.find('=');
      bool in_str = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '=' && !in_str) {
          eq = i;
          break;
        }
      }
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": expected 'key = value'");
      }
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      }
      if (doc[current].count(key)) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": duplicate key '" + key + "'");
      }
      doc[current][key] = parse_value(line.substr(eq + 1), line_no);
    }
    if (end == text.size()) break;
  }
  return doc;
}

// Typed extraction with fail-fast diagnostics.
class SectionReader {
 public:
  SectionReader(const Document& doc, const std::string& name)
      : name_(name) {
    auto it = doc.find(name);
    if (it != doc.end()) section_ = &it->second;
  }

  bool has(const std::string& key) const {
    if (section_ && section_->count(key)) {
      seen_.push_back(key);
      return true;
    }
    return false;
  }

  const TomlValue& get(const std::string& key) const {
    return section_->at(key);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Num) {
      throw ConfigError(where(key) + " must be a number");
    }
    return v.num;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    double d = number(key, static_cast<double>(fallback));
    if (d < 0 || d != std::floor(d)) {
      throw ConfigError(where(key) + " must be a non-negative integer");
    }
    return static_cast<std::size_t>(d);
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Str) {
      throw ConfigError(where(key) + " must be a string");
    }
    return v.str;
  }

  std::vector<std::string> strings(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Arr) {
      throw ConfigError(where(key) + " must be an array");
    }
    for (const TomlValue& item : v.arr) {
      if (item.kind != TomlValue::Kind::Str) {
        throw ConfigError(where(key) + " must contain strings");
      }
      out.push_back(item.str);
    }
    return out;
  }

  std::vector<std::uint64_t> integers(const std::string& key) const {
    std::vector<std::uint64_t> out;
    if (!has(key)) return out;
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Arr) {
      throw ConfigError(where(key) + " must be an array");
    }
    for (const TomlValue& item : v.arr) {
      if (item.kind != TomlValue::Kind::Num || item.num < 0 ||
          item.num != std::floor(item.num)) {
        throw ConfigError(where(key) + " must contain non-negative integers");
      }
      out.push_back(static_cast<std::uint64_t>(item.num));
    }
    return out;
  }

  // Every key in the file must have been consumed by a reader call.
  void reject_unknown() const {
    if (!section_) return;
    for (const auto& [key, value] : *section_) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError("line " + std::to_string(value.line) +
                          ": unknown key '" + key + "' in [" + name_ + "]");
      }
    }
  }

 private:
  std::string where(const std::string& key) const {
    return "[" + name_ + "] " + key;
  }

  const Section* section_ = nullptr;
  std::string name_;
  mutable std::vector<std::string> seen_;
};

}  // namespace

void DatasetSpec::validate() const {
  if (kind != "gaussian" && kind != "hard_gaussian" && kind != "idx") {
    throw ConfigError("dataset kind must be gaussian, hard_gaussian or idx");
  }
  if (kind == "idx") {
    if (images_path.empty() || labels_path.empty()) {
      throw ConfigError("idx dataset needs images_path and labels_path");
    }
  } else {
    if (classes < 2) throw ConfigError("dataset needs at least 2 classes");
    if (dim < classes) {
      throw ConfigError("gaussian dataset needs dim >= classes");
    }
    if (per_class == 0) throw ConfigError("per_class must be positive");
    if (!(sep > 0.0)) throw ConfigError("sep must be positive");
  }
  if (calibration == 0) throw ConfigError("calibration size must be positive");
}

void ExperimentConfig::validate() const {
  dataset.validate();
  recipe.validate();
  adaround.validate();
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (shadows < 2 || shadows % 2 != 0) {
    throw ConfigError("shadows must be even and >= 2");
  }
  if (methods.empty()) throw ConfigError("methods must be nonempty");
  if (bitwidths.empty()) throw ConfigError("bitwidths must be nonempty");
  if (modes.empty()) throw ConfigError("attack modes must be nonempty");
  if (decouple && decouple_last == BitWidth::Full) {
    throw ConfigError("decouple_last cannot be full");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      if (methods[i] == methods[j]) throw ConfigError("duplicate method");
    }
  }
  for (std::size_t i = 0; i < bitwidths.size(); ++i) {
    for (std::size_t j = i + 1; j < bitwidths.size(); ++j) {
      if (bitwidths[i] == bitwidths[j]) throw ConfigError("duplicate bitwidth");
    }
  }
}

ExperimentConfig parse_config(const std::string& toml_text) {
  Document doc = parse_toml(toml_text);
  for (const auto& [section, keys] : doc) {
    if (section != "dataset" && section != "recipe" && section != "quantize" &&
        section != "attack" && section != "run" && section != "") {
      throw ConfigError("unknown section [" + section + "]");
    }
    if (section == "" && !keys.empty()) {
      throw ConfigError("line " + std::to_string(keys.begin()->second.line) +
                        ": key '" + keys.begin()->first +
                        "' outside any section");
    }
  }

  ExperimentConfig cfg;

  SectionReader ds(doc, "dataset");
  cfg.dataset.kind = ds.text("kind", cfg.dataset.kind);
  cfg.dataset.classes = ds.count("classes", cfg.dataset.classes);
  cfg.dataset.dim = ds.count("dim", cfg.dataset.dim);
  cfg.dataset.per_class = ds.count("per_class", cfg.dataset.per_class);
  cfg.dataset.sep = ds.number(
      "sep", cfg.dataset.kind == "hard_gaussian" ? kHardSep : kEasySep);
  cfg.dataset.images_path = ds.text("images_path", "");
  cfg.dataset.labels_path = ds.text("labels_path", "");
  cfg.dataset.calibration = ds.count("calibration", cfg.dataset.calibration);
  ds.reject_unknown();

  SectionReader re(doc, "recipe");
  cfg.recipe.epochs = re.count("epochs", cfg.recipe.epochs);
  cfg.recipe.lr0 = re.number("lr0", cfg.recipe.lr0);
  cfg.recipe.momentum = re.number("momentum", cfg.recipe.momentum);
  cfg.recipe.weight_decay = re.number("weight_decay", cfg.recipe.weight_decay);
  std::string sched = re.text("schedule", "cosine");
  if (sched == "cosine") {
    cfg.recipe.schedule = TrainRecipe::Schedule::Cosine;
  } else if (sched == "constant") {
    cfg.recipe.schedule = TrainRecipe::Schedule::Constant;
  } else {
    throw ConfigError("[recipe] schedule must be cosine or constant");
  }
  cfg.recipe.batch_size = re.count("batch_size", cfg.recipe.batch_size);
  re.reject_unknown();

  SectionReader qz(doc, "quantize");
  for (const std::string& m : qz.strings("methods")) {
    cfg.methods.push_back(method_from_label(m));
  }
  for (const std::string& b : qz.strings("bitwidths")) {
    cfg.bitwidths.push_back(bitwidth_from_label(b));
  }
  if (qz.has("decouple_last")) {
    cfg.decouple = true;
    cfg.decouple_last = bitwidth_from_label(qz.text("decouple_last", ""));
  }
  cfg.adaround.iters = qz.count("adaround_iters", cfg.adaround.iters);
  cfg.adaround.lr = qz.number("adaround_lr", cfg.adaround.lr);
  cfg.adaround.lambda = qz.number("adaround_lambda", cfg.adaround.lambda);
  qz.reject_unknown();

  SectionReader at(doc, "attack");
  cfg.shadows = at.count("shadows", cfg.shadows);
  std::vector<std::string> mode_labels = at.strings("modes");
  if (!mode_labels.empty()) {
    cfg.modes.clear();
    for (const std::string& m : mode_labels) {
      cfg.modes.push_back(lira_mode_from_label(m));
    }
  }
  at.reject_unknown();

  SectionReader rn(doc, "run");
  cfg.seeds = rn.integers("seeds");
  cfg.output_dir = rn.text("output_dir", cfg.output_dir);
  rn.reject_unknown();

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path));
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string s = "dataset(kind=" + cfg.dataset.kind;
  if (cfg.dataset.kind == "idx") {
    s += ",images=" + cfg.dataset.images_path;
    s += ",labels=" + cfg.dataset.labels_path;
  } else {
    s += ",classes=" + std::to_string(cfg.dataset.classes);
    s += ",dim=" + std::to_string(cfg.dataset.dim);
    s += ",per_class=" + std::to_string(cfg.dataset.per_class);
    s += ",sep=" + format_double(cfg.dataset.sep);
  }
  s += ",calibration=" + std::to_string(cfg.dataset.calibration) + ")";
  s += ";recipe(epochs=" + std::to_string(cfg.recipe.epochs);
  s += ",lr0=" + format_double(cfg.recipe.lr0);
  s += ",momentum=" + format_double(cfg.recipe.momentum);
  s += ",weight_decay=" + format_double(cfg.recipe.weight_decay);
  s += std::string(",schedule=") +
       (cfg.recipe.schedule == TrainRecipe::Schedule::Cosine ? "cosine"
                                                             : "constant");
  s += ",batch_size=" + std::to_string(cfg.recipe.batch_size) + ")";
  s += ";quantize(methods=";
  for (Method m : cfg.methods) s += method_label(m) + ",";
  s += "bitwidths=";
  for (BitWidth b : cfg.bitwidths) s += bitwidth_label(b) + ",";
  if (cfg.decouple) s += "decouple_last=" + bitwidth_label(cfg.decouple_last);
  s += ",adaround=" + std::to_string(cfg.adaround.iters) + "/" +
       format_double(cfg.adaround.lr) + "/" +
       format_double(cfg.adaround.lambda) + ")";
  s += ";attack(shadows=" + std::to_string(cfg.shadows) + ",modes=";
  for (LiraMode m : cfg.modes) s += lira_mode_label(m) + ",";
  s += ")";
  s += ";seeds(";
  for (std::uint64_t seed : cfg.seeds) s += std::to_string(seed) + ",";
  s += ")";
  return s;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string canon = canonical_config(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace bitleak
