// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "erde/error.hpp"

namespace erde::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_unsigned(const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Field {
  std::string section, key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::string s, std::string k, std::size_t& ref) {
  return {std::move(s), std::move(k), [&ref](const std::string& v) { ref = parse_unsigned<std::size_t>(v); },
          [&ref] { return std::to_string(ref); }};
}
Field u64_field(std::string s, std::string k, std::uint64_t& ref) {
  return {std::move(s), std::move(k), [&ref](const std::string& v) { ref = parse_unsigned<std::uint64_t>(v); },
          [&ref] { return std::to_string(ref); }};
}
Field double_field(std::string s, std::string k, double& ref) {
  return {std::move(s), std::move(k), [&ref](const std::string& v) { ref = parse_double(v); },
          [&ref] { return format_double(ref); }};
}
Field bool_field(std::string s, std::string k, bool& ref) {
  return {std::move(s), std::move(k), [&ref](const std::string& v) { ref = parse_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}
Field string_field(std::string s, std::string k, std::string& ref) {
  return {std::move(s), std::move(k), [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

void arch_fields(std::vector<Field>& f, const std::string& s, ArchSection& a) {
  f.push_back(string_field(s, "preset", a.preset));
  f.push_back(size_field(s, "width", a.width));
  f.push_back({s, "kind", [&a](const std::string& v) { a.kind = model::parse_block_kind(v); },
               [&a] { return std::string(model::to_string(a.kind)); }});
  f.push_back(double_field(s, "dropout", a.dropout));
  f.push_back(u64_field(s, "seed", a.seed));
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  DataSection& d = c.data;
  f.push_back(string_field("data", "source", d.source));
  f.push_back({"data", "paths", [&d](const std::string& v) { d.paths = split_list(v); }, [&d] { return join(d.paths); }});
  f.push_back(string_field("data", "images", d.images));
  f.push_back(string_field("data", "labels", d.labels));
  f.push_back(size_field("data", "class_count", d.class_count));
  f.push_back(size_field("data", "count", d.count));
  f.push_back(size_field("data", "height", d.height));
  f.push_back(size_field("data", "width", d.width));
  f.push_back(double_field("data", "noise_sigma", d.noise_sigma));
  f.push_back(u64_field("data", "seed", d.seed));
  f.push_back(size_field("data", "train", d.train));
  f.push_back(size_field("data", "val", d.val));
  f.push_back(size_field("data", "test", d.test));
  f.push_back(u64_field("data", "split_seed", d.split_seed));
  f.push_back(bool_field("data", "standardize", d.standardize));

  arch_fields(f, "model", c.model);
  arch_fields(f, "teacher", c.teacher);
  TeacherSection& t = c.teacher;
  f.push_back({"teacher", "alignment",
               [&t](const std::string& v) {
                 t.alignment.clear();
                 for (const auto& item : split_list(v)) t.alignment.push_back(parse_unsigned<std::size_t>(item));
               },
               [&t] {
                 std::vector<std::string> items;
                 for (std::size_t a : t.alignment) items.push_back(std::to_string(a));
                 return join(items);
               }});

  TrainSection& tr = c.train;
  f.push_back(size_field("train", "epochs", tr.epochs));
  f.push_back(size_field("train", "batch_size", tr.batch_size));
  f.push_back(double_field("train", "learning_rate", tr.learning_rate));
  f.push_back(u64_field("train", "seed", tr.seed));
  f.push_back(size_field("train", "early_stop_patience", tr.early_stop_patience));
  f.push_back(bool_field("train", "flip", tr.augment.flip));
  f.push_back(bool_field("train", "rotate", tr.augment.rotate));
  f.push_back(bool_field("train", "translate", tr.augment.translate));
  f.push_back(bool_field("train", "crop", tr.augment.crop));
  f.push_back(bool_field("train", "erase", tr.augment.erase));
  f.push_back(double_field("train", "flip_probability", tr.augment.flip_probability));
  f.push_back(double_field("train", "augment_probability", tr.augment.probability));

  losses::LossWeights& l = c.loss;
  f.push_back(double_field("loss", "omega_kl", l.omega_kl));
  f.push_back(double_field("loss", "omega_ce", l.omega_ce));
  f.push_back(double_field("loss", "omega_e", l.omega_e));
  f.push_back(double_field("loss", "temperature", l.temperature));
  f.push_back(bool_field("loss", "soften_ce", l.soften_ce));

  SweepSection& s = c.sweep;
  f.push_back(double_field("sweep", "theta_min", s.theta_min));
  f.push_back(double_field("sweep", "theta_max", s.theta_max));
  f.push_back(size_field("sweep", "steps", s.steps));
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.source != "synth" && data.source != "cifar" && data.source != "idx") {
    throw ConfigError("[data] source must be synth, cifar or idx, got '" + data.source + "'");
  }
  if (data.source == "cifar" && data.paths.empty()) throw ConfigError("[data] source = cifar needs paths");
  if (data.source == "idx" && (data.images.empty() || data.labels.empty())) {
    throw ConfigError("[data] source = idx needs images and labels");
  }
  if (data.class_count < 2) throw ConfigError("[data] class_count must be at least 2");
  if (data.train == 0) throw ConfigError("[data] train must be positive");
  if (data.noise_sigma < 0.0) throw ConfigError("[data] noise_sigma must be non-negative");
  for (const ArchSection* a : {static_cast<const ArchSection*>(&model), static_cast<const ArchSection*>(&teacher)}) {
    if (a->width == 0) throw ConfigError("architecture width must be positive");
    if (!(a->dropout >= 0.0 && a->dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  }
  for (std::size_t a : teacher.alignment) {
    if (a == 0) throw ConfigError("[teacher] alignment entries are 1-based exit indices");
  }
  if (sweep.theta_min < 0.0) throw ConfigError("[sweep] theta_min must be non-negative");
  if (sweep.theta_max >= 0.0 && sweep.theta_max < sweep.theta_min) {
    throw ConfigError("[sweep] theta_max must not be below theta_min");
  }
  if (sweep.steps == 0) throw ConfigError("[sweep] steps must be positive");
  if (train.epochs == 0 || train.batch_size == 0) throw ConfigError("[train] epochs and batch_size must be positive");
  if (!(train.learning_rate > 0.0)) throw ConfigError("[train] learning_rate must be positive");
  for (double p : {train.augment.flip_probability, train.augment.probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("[train] augmentation probabilities must be in [0, 1]");
  }
  loss.validate();
}

double ExperimentConfig::resolved_theta_max() const {
  return sweep.theta_max >= 0.0 ? sweep.theta_max : std::log(static_cast<double>(data.class_count));
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig config;
  auto table = fields(config);
  std::set<std::string> sections, seen;
  for (const Field& f : table) sections.insert(f.section);

  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find_first_of("#;"));
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' appears before any section header");
    const std::string full = section + "." + key;
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const Field& f) { return f.section == section && f.key == key; });
    if (it == table.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(full).second) fail("duplicate key '" + key + "' in [" + section + "]");
    try {
      it->set(value);
    } catch (const ConfigError& e) {
      fail("key '" + key + "': " + e.what());
    }
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string to_ini(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out, section;
  for (const Field& f : fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace erde::cli
