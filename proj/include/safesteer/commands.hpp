// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "safesteer/config.hpp"
#include "safesteer/experiment.hpp"

namespace safesteer::cli {

// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
};

RunConfig apply_overrides(RunConfig cfg, const Overrides& o);

// Seed used for every Monte-Carlo evaluation of a run.
std::uint64_t eval_seed(const RunConfig& cfg);

// train: writes into cfg.out_dir
//   config.txt          the effective configuration
//   metrics.jsonl       one StepMetrics object per training step
//   eval.jsonl          {step, unsafe_rate, utility} every eval_every steps
//   ckpt_<step>.bin     every checkpoint_every steps
//   final.ckpt          parameters after the last step
//   summary.json        final evaluation
struct TrainSummary {
  EvalReport final;
  int epochs = 0;
  std::vector<grpo::StepMetrics> history;
};

std::string metrics_line(const grpo::StepMetrics& m);

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log);

// steer-sweep: one row per (prompt, alpha).
struct SweepRow {
  int prompt = 0;
  std::string name;
  std::string label;
  double alpha = 0.0;
  double score_before = 0.0;
  double score_after = 0.0;
};

std::vector<SweepRow> steer_sweep(const std::vector<embedspace::UnitEmbedding>& prompts,
                                  const std::vector<std::string>& names, const std::vector<std::string>& labels,
                                  const embedspace::SafetyDirection& v, const std::vector<double>& alphas);
std::vector<SweepRow> cmd_steer_sweep(const RunConfig& cfg, const std::vector<double>& alphas);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// ablate-reward: every variant trained from the same seed and budget.
struct AblationRow {
  reward::Variant variant = reward::Variant::kSteered;
  double unsafe_rate = 0.0;
  double utility = 0.0;
};

std::vector<AblationRow> cmd_ablate_reward(const RunConfig& cfg, const std::vector<reward::Variant>& variants,
                                           std::ostream& log);
nlohmann::ordered_json ablation_json(const RunConfig& cfg, const std::vector<AblationRow>& rows);

// ablate-sampler: a fixed checkpoint evaluated under each (eta, T).
struct SamplerRow {
  double eta = 0.0;
  int steps = 0;
  double unsafe_rate = 0.0;
  double utility = 0.0;
};

std::vector<SamplerRow> cmd_ablate_sampler(const RunConfig& cfg, const Checkpoint& ckpt, const std::vector<double>& etas,
                                           const std::vector<int>& steps);
void write_sampler_csv(std::ostream& out, const std::vector<SamplerRow>& rows);

// eval: the base model, or a checkpoint when one is given.
nlohmann::ordered_json cmd_eval(const RunConfig& cfg, const std::optional<Checkpoint>& ckpt);

}  // namespace safesteer::cli
