// SPDX-License-Identifier: Apache-2.0
#include "safesteer/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "safesteer/errors.hpp"
#include "safesteer/tables.hpp"

namespace safesteer::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const ordered_json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

std::string label_of(const synthlab::Prompt& p) { return p.unsafe ? "unsafe" : "safe"; }

}  // namespace

RunConfig apply_overrides(RunConfig cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

std::uint64_t eval_seed(const RunConfig& cfg) { return diffnum::mix_seed(cfg.seed, 0xE7A1); }

std::string metrics_line(const grpo::StepMetrics& m) {
  ordered_json j;
  j["step"] = m.step;
  j["reward_mean_safe"] = m.reward_mean_safe;
  j["reward_mean_unsafe"] = m.reward_mean_unsafe;
  j["kl_mean"] = m.kl_mean;
  j["clip_frac"] = m.clip_frac;
  j["grad_norm"] = m.grad_norm;
  j["unsafe_rate"] = m.unsafe_rate;
  return j.dump();
}

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "config.txt");
    out << serialize_config(cfg);
  }

  log << "pretraining base model (" << cfg.pretrain_steps << " steps)\n";
  const Experiment exp = build_experiment(cfg);

  auto metrics = open_output(dir / "metrics.jsonl", std::ios::out | std::ios::trunc);
  std::ofstream evals;
  if (cfg.eval_every > 0) evals = open_output(dir / "eval.jsonl", std::ios::out | std::ios::trunc);

  grpo::TrainHooks hooks;
  hooks.on_step = [&](const grpo::StepMetrics& m) {
    metrics << metrics_line(m) << '\n';
    if (m.step % 25 == 0) {
      log << "step " << m.step << " unsafe_rate " << m.unsafe_rate << " kl " << m.kl_mean << '\n';
    }
  };
  hooks.checkpoint_every = 1;
  hooks.on_checkpoint = [&](int step, const diffuser::DenoiserModel& model) {
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      save_checkpoint((dir / ("ckpt_" + std::to_string(step) + ".bin")).string(), checkpoint_of(cfg, model));
    }
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      const EvalReport r = evaluate(exp, model, exp.schedule, cfg.eval_samples, eval_seed(cfg));
      evals << ordered_json{{"step", step}, {"unsafe_rate", r.unsafe_rate}, {"utility", r.utility}}.dump() << '\n';
    }
  };

  grpo::TrainResult result = run_training(exp, hooks);
  metrics.flush();
  save_checkpoint((dir / "final.ckpt").string(), checkpoint_of(cfg, result.model));

  TrainSummary summary;
  summary.final = evaluate(exp, result.model, exp.schedule, cfg.eval_samples, eval_seed(cfg));
  summary.epochs = cfg.epochs;
  summary.history = std::move(result.history);

  ordered_json doc;
  doc["schema"] = "safesteer.summary/1";
  doc["final_unsafe_rate"] = summary.final.unsafe_rate;
  doc["final_utility"] = summary.final.utility;
  doc["epochs"] = summary.epochs;
  doc["variant"] = reward::to_string(cfg.reward.variant);
  doc["seed"] = cfg.seed;
  doc["config_hash"] = config_hash(cfg);
  write_json(dir / "summary.json", doc);
  log << "final unsafe_rate " << summary.final.unsafe_rate << " utility " << summary.final.utility << '\n';
  return summary;
}

std::vector<SweepRow> steer_sweep(const std::vector<embedspace::UnitEmbedding>& prompts,
                                  const std::vector<std::string>& names, const std::vector<std::string>& labels,
                                  const embedspace::SafetyDirection& v, const std::vector<double>& alphas) {
  if (names.size() != prompts.size() || labels.size() != prompts.size()) {
    throw DimensionError("steer_sweep: names and labels must match the prompts");
  }
  std::vector<SweepRow> rows;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const double before = embedspace::text_safety_score(prompts[p], v);
    for (double a : alphas) {
      // Only prompts on the unsafe side of the direction are moved, as in the reward.
      const auto target = before < 0.0 ? embedspace::steer(prompts[p], v, a) : prompts[p];
      rows.push_back({static_cast<int>(p), names[p], labels[p], a, before, embedspace::text_safety_score(target, v)});
    }
  }
  return rows;
}

std::vector<SweepRow> cmd_steer_sweep(const RunConfig& cfg, const std::vector<double>& alphas) {
  cfg.validate();
  if (alphas.empty()) throw ConfigError("steer-sweep needs at least one alpha");
  const auto task = synthlab::make_task(cfg.preset, cfg.task_seed);
  const auto reward = build_reward_model(cfg, task);
  std::vector<embedspace::UnitEmbedding> prompts;
  std::vector<std::string> names, labels;
  for (const auto& p : task.prompts) {
    prompts.push_back(reward->prompt_embedding(p.id));
    names.push_back(p.name);
    labels.push_back(label_of(p));
  }
  return steer_sweep(prompts, names, labels, reward->direction(), alphas);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "# safesteer steer-sweep v1: score = cosine of the prompt embedding with the safety direction;"
         " score_after applies steering with strength alpha when score_before < 0\n";
  out << "prompt_id,prompt_name,label,alpha,score_before,score_after\n";
  for (const auto& r : rows) {
    out << r.prompt << ',' << r.name << ',' << r.label << ',' << format_double(r.alpha) << ','
        << format_double(r.score_before) << ',' << format_double(r.score_after) << '\n';
  }
}

std::vector<AblationRow> cmd_ablate_reward(const RunConfig& cfg, const std::vector<reward::Variant>& variants,
                                           std::ostream& log) {
  if (variants.empty()) throw ConfigError("ablate-reward needs at least one variant");
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    RunConfig run = cfg;
    run.reward.variant = v;
    run.validate();
    log << "training variant " << reward::to_string(v) << " for " << run.epochs << " steps\n";
    const Experiment exp = build_experiment(run);
    const auto result = run_training(exp);
    const EvalReport r = evaluate(exp, result.model, exp.schedule, run.eval_samples, eval_seed(run));
    log << "  unsafe_rate " << r.unsafe_rate << " utility " << r.utility << '\n';
    rows.push_back({v, r.unsafe_rate, r.utility});
  }
  return rows;
}

ordered_json ablation_json(const RunConfig& cfg, const std::vector<AblationRow>& rows) {
  ordered_json doc;
  doc["schema"] = "safesteer.ablate_reward/1";
  doc["columns"] = {{"variant", "reward variant used for training"},
                    {"unsafe_rate", "oracle-flagged fraction of samples on unsafe prompts"},
                    {"utility_score", "mean image/text cosine on safe prompts"}};
  doc["preset"] = cfg.preset;
  doc["seed"] = cfg.seed;
  doc["epochs"] = cfg.epochs;
  doc["eval_samples"] = cfg.eval_samples;
  ordered_json list = ordered_json::array();
  for (const auto& r : rows) {
    list.push_back({{"variant", reward::to_string(r.variant)}, {"unsafe_rate", r.unsafe_rate}, {"utility_score", r.utility}});
  }
  doc["rows"] = std::move(list);
  return doc;
}

std::vector<SamplerRow> cmd_ablate_sampler(const RunConfig& cfg, const Checkpoint& ckpt, const std::vector<double>& etas,
                                           const std::vector<int>& steps) {
  if (etas.empty() || steps.empty()) throw ConfigError("ablate-sampler needs non-empty eta and step grids");
  const Experiment exp = build_experiment(cfg, false);
  const auto model = model_from_checkpoint(exp, ckpt);
  std::vector<SamplerRow> rows;
  for (double eta : etas) {
    for (int t : steps) {
      const auto schedule = diffuser::NoiseSchedule::exponential(t, eta, cfg.alpha_bar_start, cfg.alpha_bar_end);
      const EvalReport r = evaluate(exp, model, schedule, cfg.eval_samples, eval_seed(cfg));
      rows.push_back({eta, t, r.unsafe_rate, r.utility});
    }
  }
  return rows;
}

void write_sampler_csv(std::ostream& out, const std::vector<SamplerRow>& rows) {
  out << "# safesteer ablate-sampler v1: one checkpoint evaluated under each DDIM eta and step count\n";
  out << "eta,steps,unsafe_rate,utility_score\n";
  for (const auto& r : rows) {
    out << format_double(r.eta) << ',' << r.steps << ',' << format_double(r.unsafe_rate) << ','
        << format_double(r.utility) << '\n';
  }
}

ordered_json cmd_eval(const RunConfig& cfg, const std::optional<Checkpoint>& ckpt) {
  const Experiment exp = build_experiment(cfg, !ckpt.has_value());
  const auto model = ckpt ? model_from_checkpoint(exp, *ckpt) : exp.base_model;
  const auto policy = make_policy(model, exp.schedule, cfg.guidance);
  const auto seed = eval_seed(cfg);
  const EvalReport total = evaluate(exp, model, exp.schedule, cfg.eval_samples, seed);

  ordered_json doc;
  doc["schema"] = "safesteer.eval/1";
  doc["model"] = ckpt ? "checkpoint" : "base";
  doc["eval_samples"] = cfg.eval_samples;
  doc["unsafe_rate"] = total.unsafe_rate;
  doc["utility_score"] = total.utility;
  ordered_json prompts = ordered_json::array();
  for (const auto& p : exp.task.prompts) {
    const std::vector<int> one{p.id};
    ordered_json row{{"prompt_id", p.id}, {"prompt_name", p.name}, {"label", label_of(p)}};
    row["unsafe_rate"] = synthlab::unsafe_rate(policy, one, exp.task, cfg.eval_samples, cfg.unsafe_threshold, seed);
    row["utility_score"] =
        synthlab::utility_score(policy, one, exp.task, exp.reward->encoder(), cfg.eval_samples, seed);
    const auto& held = exp.task.held_out_unsafe_ids;
    row["held_out"] = std::find(held.begin(), held.end(), p.id) != held.end();
    prompts.push_back(std::move(row));
  }
  doc["prompts"] = std::move(prompts);
  return doc;
}

}  // namespace safesteer::cli
