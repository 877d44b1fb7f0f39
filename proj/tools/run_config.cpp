// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "hdit/error.hpp"

namespace hdit::cli {
namespace {

using Section = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(key, "expected a number, got '" + text + "'");
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(key, "expected an integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  fail(key, "expected true or false, got '" + text + "'");
}

std::string to_str(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') return text.substr(1, text.size() - 2);
  return text;
}

std::vector<std::string> to_list(const std::string& key, const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') fail(key, "expected a list like [a, b]");
  std::vector<std::string> out;
  const std::string body = trim(text.substr(1, text.size() - 2));
  if (body.empty()) return out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(key, "empty list element");
    out.push_back(to_str(item));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename F>
std::string fmt_list(std::size_t n, F&& item) {
  std::string out = "[";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += item(i);
  }
  return out + "]";
}

// Pops `key` from the section if present.
bool take(Section& sec, const std::string& key, std::string& value) {
  const auto it = sec.find(key);
  if (it == sec.end()) return false;
  value = it->second;
  sec.erase(it);
  return true;
}

void reject_leftovers(const std::string& name, const Section& sec) {
  if (!sec.empty()) fail("[" + name + "]", "unknown key '" + sec.begin()->first + "'");
}

ModelConfig parse_model(Section sec) {
  ModelConfig m;
  std::string v;
  if (take(sec, "preset", v)) m = presets::by_name(to_str(v));

  std::vector<std::string> widths, depths, kinds, sizes, drops;
  const bool has_widths = take(sec, "widths", v);
  if (has_widths) widths = to_list("widths", v);
  const bool has_depths = take(sec, "depths", v);
  if (has_depths) depths = to_list("depths", v);
  const bool has_kinds = take(sec, "attention", v);
  if (has_kinds) kinds = to_list("attention", v);
  const bool has_sizes = take(sec, "attention_size", v);
  if (has_sizes) sizes = to_list("attention_size", v);
  const bool has_drops = take(sec, "dropout", v);
  if (has_drops) drops = to_list("dropout", v);

  const std::size_t n = has_widths ? widths.size() : m.levels.size();
  if (n != m.levels.size()) {
    if (!has_depths) fail("[model]", "depths must be given when the level count changes");
    m.levels.assign(n, LevelConfig{});
  }
  auto check_len = [&](bool present, const std::vector<std::string>& list, const char* key) {
    if (present && list.size() != n) fail(key, "expected " + std::to_string(n) + " entries");
  };
  check_len(has_depths, depths, "depths");
  check_len(has_kinds, kinds, "attention");
  check_len(has_sizes, sizes, "attention_size");
  check_len(has_drops, drops, "dropout");
  for (std::size_t i = 0; i < n; ++i) {
    auto& level = m.levels[i];
    if (has_widths) level.width = to_int("widths", widths[i]);
    if (has_depths) level.depth = static_cast<int>(to_int("depths", depths[i]));
    if (has_kinds) level.attention.kind = parse_attention_kind(kinds[i]);
    if (has_sizes) level.attention.size = to_int("attention_size", sizes[i]);
    if (has_drops) level.dropout = to_double("dropout", drops[i]);
  }

  if (take(sec, "in_channels", v)) m.in_channels = to_int("in_channels", v);
  if (take(sec, "patch_size", v)) m.patch_size = to_int("patch_size", v);
  if (take(sec, "head_dim", v)) m.head_dim = to_int("head_dim", v);
  if (take(sec, "mapping_depth", v)) m.mapping_depth = static_cast<int>(to_int("mapping_depth", v));
  if (take(sec, "mapping_width", v)) m.mapping_width = to_int("mapping_width", v);
  if (take(sec, "num_classes", v)) m.num_classes = to_int("num_classes", v);
  if (take(sec, "feedforward", v)) m.feedforward = parse_feedforward_kind(to_str(v));
  if (take(sec, "resolution", v)) m.resolution = to_int("resolution", v);
  if (take(sec, "free_core_size", v)) m.free_core_size = to_bool("free_core_size", v);
  reject_leftovers("model", sec);
  return m;
}

DiffusionConfig parse_diffusion(Section sec, std::int64_t model_resolution) {
  DiffusionConfig d;
  d.resolution = model_resolution;
  std::string v;
  if (take(sec, "sigma_data", v)) d.sigma_data = to_double("sigma_data", v);
  if (take(sec, "sigma_min", v)) d.sigma_min = to_double("sigma_min", v);
  if (take(sec, "sigma_max", v)) d.sigma_max = to_double("sigma_max", v);
  if (take(sec, "weighting", v)) d.weighting = parse_loss_weighting(to_str(v));
  if (take(sec, "gamma", v)) d.gamma = to_double("gamma", v);
  if (take(sec, "cond_dropout", v)) d.cond_dropout = to_double("cond_dropout", v);
  if (take(sec, "ema_decay", v)) d.ema_decay = to_double("ema_decay", v);
  if (take(sec, "resolution", v)) d.resolution = to_int("resolution", v);
  if (take(sec, "shift_base", v)) {
    if (to_str(v) == "none") {
      d.shift_base.reset();
    } else {
      d.shift_base = to_int("shift_base", v);
    }
  }
  reject_leftovers("diffusion", sec);
  return d;
}

AdamWConfig parse_optimizer(Section sec) {
  AdamWConfig o;
  std::string v;
  if (take(sec, "lr", v)) o.lr = to_double("lr", v);
  if (take(sec, "beta1", v)) o.beta1 = to_double("beta1", v);
  if (take(sec, "beta2", v)) o.beta2 = to_double("beta2", v);
  if (take(sec, "eps", v)) o.eps = to_double("eps", v);
  if (take(sec, "weight_decay", v)) o.weight_decay = to_double("weight_decay", v);
  reject_leftovers("optimizer", sec);
  return o;
}

SamplerConfig parse_sampler(Section sec) {
  SamplerConfig s;
  std::string v;
  if (take(sec, "steps", v)) s.steps = static_cast<int>(to_int("steps", v));
  if (take(sec, "sigma_min", v)) s.sigma_min = to_double("sigma_min", v);
  if (take(sec, "sigma_max", v)) s.sigma_max = to_double("sigma_max", v);
  if (take(sec, "rho", v)) s.rho = to_double("rho", v);
  if (take(sec, "cfg_scale", v)) s.cfg_scale = to_double("cfg_scale", v);
  reject_leftovers("sampler", sec);
  return s;
}

DataConfig parse_data(Section sec) {
  DataConfig d;
  std::string v;
  if (take(sec, "source", v)) d.source = to_str(v);
  if (take(sec, "size", v)) d.size = to_int("size", v);
  reject_leftovers("data", sec);
  return d;
}

TrainConfig parse_train(Section sec) {
  TrainConfig t;
  std::string v;
  if (take(sec, "seed", v)) {
    const auto seed = to_int("seed", v);
    if (seed < 0) fail("seed", "must be non-negative");
    t.seed = static_cast<std::uint64_t>(seed);
  }
  if (take(sec, "steps", v)) t.steps = to_int("steps", v);
  if (take(sec, "batch_size", v)) t.batch_size = to_int("batch_size", v);
  if (take(sec, "checkpoint_dir", v)) t.checkpoint_dir = to_str(v);
  if (take(sec, "output_dir", v)) t.output_dir = to_str(v);
  if (take(sec, "log_interval", v)) t.log_interval = to_int("log_interval", v);
  if (take(sec, "checkpoint_every", v)) t.checkpoint_every = to_int("checkpoint_every", v);
  if (take(sec, "keep_checkpoints", v)) t.keep_checkpoints = to_bool("keep_checkpoints", v);
  if (take(sec, "sample_every", v)) t.sample_every = to_int("sample_every", v);
  if (take(sec, "grid_rows", v)) t.grid_rows = to_int("grid_rows", v);
  reject_leftovers("train", sec);
  return t;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  diffusion.validate();
  optimizer.validate();
  sampler.validate();
  if (data.source.empty()) throw ConfigError("data.source is empty");
  if (data.size < 1) throw ConfigError("data.size must be positive");
  if (train.steps < 0) throw ConfigError("train.steps must be non-negative");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (train.log_interval < 0 || train.checkpoint_every < 0 || train.sample_every < 0) {
    throw ConfigError("train intervals must be non-negative");
  }
  if (train.grid_rows < 1) throw ConfigError("train.grid_rows must be positive");
  if (train.checkpoint_dir.empty()) throw ConfigError("train.checkpoint_dir is empty");
}

RunConfig parse_run_config(const std::string& text) {
  static const std::set<std::string> known = {"model", "diffusion", "optimizer", "sampler", "data", "train"};
  std::map<std::string, Section> sections;
  std::string current;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') fail(where, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (!known.count(current)) fail(where, "unknown section [" + current + "]");
      if (sections.count(current)) fail(where, "duplicate section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(where, "expected key = value");
    if (current.empty()) fail(where, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(where, "empty key or value");
    if (!sections[current].emplace(key, value).second) fail(where, "duplicate key '" + key + "'");
  }

  RunConfig c;
  c.model = parse_model(sections["model"]);
  c.diffusion = parse_diffusion(sections["diffusion"], c.model.resolution);
  c.optimizer = parse_optimizer(sections["optimizer"]);
  c.sampler = parse_sampler(sections["sampler"]);
  c.data = parse_data(sections["data"]);
  c.train = parse_train(sections["train"]);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize(const RunConfig& c) {
  std::ostringstream out;
  const auto& m = c.model;
  const auto n = m.levels.size();
  out << "[model]\n";
  out << "in_channels = " << m.in_channels << "\n";
  out << "patch_size = " << m.patch_size << "\n";
  out << "widths = " << fmt_list(n, [&](std::size_t i) { return std::to_string(m.levels[i].width); }) << "\n";
  out << "depths = " << fmt_list(n, [&](std::size_t i) { return std::to_string(m.levels[i].depth); }) << "\n";
  out << "attention = " << fmt_list(n, [&](std::size_t i) { return to_string(m.levels[i].attention.kind); })
      << "\n";
  out << "attention_size = "
      << fmt_list(n, [&](std::size_t i) { return std::to_string(m.levels[i].attention.size); }) << "\n";
  out << "dropout = " << fmt_list(n, [&](std::size_t i) { return fmt(m.levels[i].dropout); }) << "\n";
  out << "head_dim = " << m.head_dim << "\n";
  out << "mapping_depth = " << m.mapping_depth << "\n";
  out << "mapping_width = " << m.mapping_width << "\n";
  out << "num_classes = " << m.num_classes << "\n";
  out << "feedforward = " << to_string(m.feedforward) << "\n";
  out << "resolution = " << m.resolution << "\n";
  out << "free_core_size = " << fmt(m.free_core_size) << "\n";

  const auto& d = c.diffusion;
  out << "\n[diffusion]\n";
  out << "sigma_data = " << fmt(d.sigma_data) << "\n";
  out << "sigma_min = " << fmt(d.sigma_min) << "\n";
  out << "sigma_max = " << fmt(d.sigma_max) << "\n";
  out << "weighting = " << to_string(d.weighting) << "\n";
  out << "gamma = " << fmt(d.gamma) << "\n";
  out << "cond_dropout = " << fmt(d.cond_dropout) << "\n";
  out << "ema_decay = " << fmt(d.ema_decay) << "\n";
  out << "resolution = " << d.resolution << "\n";
  out << "shift_base = " << (d.shift_base ? std::to_string(*d.shift_base) : std::string("none")) << "\n";

  const auto& o = c.optimizer;
  out << "\n[optimizer]\n";
  out << "lr = " << fmt(o.lr) << "\n";
  out << "beta1 = " << fmt(o.beta1) << "\n";
  out << "beta2 = " << fmt(o.beta2) << "\n";
  out << "eps = " << fmt(o.eps) << "\n";
  out << "weight_decay = " << fmt(o.weight_decay) << "\n";

  const auto& s = c.sampler;
  out << "\n[sampler]\n";
  out << "steps = " << s.steps << "\n";
  out << "sigma_min = " << fmt(s.sigma_min) << "\n";
  out << "sigma_max = " << fmt(s.sigma_max) << "\n";
  out << "rho = " << fmt(s.rho) << "\n";
  out << "cfg_scale = " << fmt(s.cfg_scale) << "\n";

  out << "\n[data]\n";
  out << "source = " << c.data.source << "\n";
  out << "size = " << c.data.size << "\n";

  const auto& t = c.train;
  out << "\n[train]\n";
  out << "seed = " << t.seed << "\n";
  out << "steps = " << t.steps << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "checkpoint_dir = " << t.checkpoint_dir << "\n";
  out << "output_dir = " << t.output_dir << "\n";
  out << "log_interval = " << t.log_interval << "\n";
  out << "checkpoint_every = " << t.checkpoint_every << "\n";
  out << "keep_checkpoints = " << fmt(t.keep_checkpoints) << "\n";
  out << "sample_every = " << t.sample_every << "\n";
  out << "grid_rows = " << t.grid_rows << "\n";
  return out.str();
}

}  // namespace hdit::cli
