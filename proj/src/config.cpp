// SPDX-License-Identifier: Apache-2.0
#include "safesteer/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "safesteer/errors.hpp"
#include "safesteer/synthlab.hpp"
#include "safesteer/tables.hpp"

namespace safesteer {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(const std::string& text) {
  const std::string t = trim(text);
  Int v{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError("not an integer: '" + text + "'");
  return v;
}

std::vector<diffnum::Index> parse_sizes(const std::string& text) {
  std::vector<diffnum::Index> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_int<diffnum::Index>(cell));
  return out;
}

std::string join_sizes(const std::vector<diffnum::Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field real(std::string section, std::string key, T RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return format_double(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = parse_double(v); }};
}

template <typename T>
Field integer(std::string section, std::string key, T RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = parse_int<T>(v); }};
}

Field text(std::string section, std::string key, std::string RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, const std::string& v) { c.*member = trim(v); }};
}

Field grpo_real(std::string key, double grpo::GrpoConfig::*member) {
  return {"grpo", key, [member](const RunConfig& c) { return format_double(c.grpo.*member); },
          [member](RunConfig& c, const std::string& v) { c.grpo.*member = parse_double(v); }};
}

Field grpo_int(std::string key, int grpo::GrpoConfig::*member) {
  return {"grpo", key, [member](const RunConfig& c) { return std::to_string(c.grpo.*member); },
          [member](RunConfig& c, const std::string& v) { c.grpo.*member = parse_int<int>(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("task", "preset", &RunConfig::preset));
    f.push_back(integer("task", "seed", &RunConfig::task_seed));
    f.push_back(integer("task", "embed_dim", &RunConfig::embed_dim));
    f.push_back(real("task", "encoder_offset", &RunConfig::encoder_offset));
    f.push_back(integer("task", "encoder_seed", &RunConfig::encoder_seed));

    f.push_back({"model", "hidden", [](const RunConfig& c) { return join_sizes(c.hidden); },
                 [](RunConfig& c, const std::string& v) { c.hidden = parse_sizes(v); }});
    f.push_back(integer("model", "init_seed", &RunConfig::init_seed));
    f.push_back(integer("model", "pretrain_steps", &RunConfig::pretrain_steps));
    f.push_back(integer("model", "pretrain_batch", &RunConfig::pretrain_batch));
    f.push_back(real("model", "pretrain_lr", &RunConfig::pretrain_lr));
    f.push_back(real("model", "cond_dropout", &RunConfig::cond_dropout));

    f.push_back(integer("schedule", "steps", &RunConfig::steps));
    f.push_back(real("schedule", "eta", &RunConfig::eta));
    f.push_back(real("schedule", "alpha_bar_start", &RunConfig::alpha_bar_start));
    f.push_back(real("schedule", "alpha_bar_end", &RunConfig::alpha_bar_end));
    f.push_back(real("schedule", "guidance", &RunConfig::guidance));

    f.push_back({"reward", "variant", [](const RunConfig& c) { return reward::to_string(c.reward.variant); },
                 [](RunConfig& c, const std::string& v) { c.reward.variant = reward::parse_variant(trim(v)); }});
    f.push_back({"reward", "alpha", [](const RunConfig& c) { return format_double(c.reward.alpha); },
                 [](RunConfig& c, const std::string& v) { c.reward.alpha = parse_double(v); }});
    f.push_back({"reward", "lambda_neg", [](const RunConfig& c) { return format_double(c.reward.lambda_neg); },
                 [](RunConfig& c, const std::string& v) { c.reward.lambda_neg = parse_double(v); }});
    f.push_back(text("reward", "safe_anchors", &RunConfig::safe_anchor_file));
    f.push_back(text("reward", "unsafe_anchors", &RunConfig::unsafe_anchor_file));

    f.push_back(grpo_int("group_size", &grpo::GrpoConfig::group_size));
    f.push_back(grpo_real("clip_range", &grpo::GrpoConfig::clip_range));
    f.push_back(grpo_real("delta", &grpo::GrpoConfig::delta));
    f.push_back(grpo_real("kl_coef", &grpo::GrpoConfig::kl_coef));
    f.push_back(grpo_int("inner_epochs", &grpo::GrpoConfig::inner_epochs));
    f.push_back(grpo_real("adv_clip", &grpo::GrpoConfig::adv_clip));
    f.push_back(grpo_real("grad_clip", &grpo::GrpoConfig::grad_clip));
    f.push_back(grpo_real("timestep_fraction", &grpo::GrpoConfig::timestep_fraction));
    f.push_back(grpo_real("lr", &grpo::GrpoConfig::lr));
    f.push_back(grpo_real("beta1", &grpo::GrpoConfig::beta1));
    f.push_back(grpo_real("beta2", &grpo::GrpoConfig::beta2));
    f.push_back(grpo_real("adam_eps", &grpo::GrpoConfig::adam_eps));
    f.push_back(grpo_real("kl_abort", &grpo::GrpoConfig::kl_abort));
    f.push_back({"grpo", "shared_noise", [](const RunConfig& c) { return std::string(c.grpo.noise_per_group ? "group" : "batch"); },
                 [](RunConfig& c, const std::string& v) {
                   const std::string t = trim(v);
                   if (t != "batch" && t != "group") throw ConfigError("shared_noise must be 'batch' or 'group'");
                   c.grpo.noise_per_group = t == "group";
                 }});

    f.push_back(integer("run", "epochs", &RunConfig::epochs));
    f.push_back(integer("run", "eval_every", &RunConfig::eval_every));
    f.push_back(integer("run", "eval_samples", &RunConfig::eval_samples));
    f.push_back(integer("run", "checkpoint_every", &RunConfig::checkpoint_every));
    f.push_back(real("run", "unsafe_threshold", &RunConfig::unsafe_threshold));
    f.push_back(integer("run", "seed", &RunConfig::seed));
    f.push_back(integer("run", "workers", &RunConfig::workers));
    f.push_back(text("run", "out_dir", &RunConfig::out_dir));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  const auto presets = synthlab::preset_names();
  if (std::find(presets.begin(), presets.end(), preset) == presets.end()) throw ConfigError("task.preset: unknown preset '" + preset + "'");
  if (embed_dim < 3) throw ConfigError("task.embed_dim must be >= 3");
  if (!(encoder_offset >= 0.0)) throw ConfigError("task.encoder_offset must be >= 0");
  for (auto h : hidden) {
    if (h < 1) throw ConfigError("model.hidden sizes must be positive");
  }
  if (pretrain_steps < 0 || pretrain_batch < 1) throw ConfigError("model.pretrain_steps >= 0 and pretrain_batch >= 1 required");
  if (!(pretrain_lr > 0.0)) throw ConfigError("model.pretrain_lr must be > 0");
  if (!(cond_dropout >= 0.0 && cond_dropout < 1.0)) throw ConfigError("model.cond_dropout must lie in [0, 1)");
  if (steps < 1) throw ConfigError("schedule.steps must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("schedule.eta must lie in (0, 1] for training");
  if (!(alpha_bar_end > 0.0 && alpha_bar_end < alpha_bar_start && alpha_bar_start <= 1.0)) {
    throw ConfigError("schedule needs 0 < alpha_bar_end < alpha_bar_start <= 1");
  }
  if (!std::isfinite(guidance)) throw ConfigError("schedule.guidance must be finite");
  reward.validate();
  grpo.validate();
  if (epochs < 0) throw ConfigError("run.epochs must be >= 0");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("run.eval_every and run.checkpoint_every must be >= 0");
  if (eval_samples < 1) throw ConfigError("run.eval_samples must be >= 1");
  if (!(unsafe_threshold > 0.0 && unsafe_threshold < 1.0)) throw ConfigError("run.unsafe_threshold must lie in (0, 1)");
  if (workers < 1) throw ConfigError("run.workers must be >= 1");
}

RunConfig parse_config(std::istream& in) {
  static const std::set<std::string> sections{"task", "model", "schedule", "reward", "grpo", "run"};
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("unterminated section header", line_no);
      section = trim(t.substr(1, t.size() - 2));
      if (!sections.count(section)) throw ConfigError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (section.empty()) throw ConfigError("entry outside of any section", line_no);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
    if (!seen.insert(section + "." + key).second) throw ConfigError("duplicate key '" + key + "'", line_no);
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(section + "." + key + ": " + e.what(), line_no);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  RunConfig normalized = cfg;
  normalized.out_dir.clear();
  normalized.workers = 1;
  const std::string text = serialize_config(normalized);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace safesteer
