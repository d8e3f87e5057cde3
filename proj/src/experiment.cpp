// SPDX-License-Identifier: Apache-2.0
#include "safesteer/experiment.hpp"

#include "safesteer/errors.hpp"
#include "safesteer/tables.hpp"

namespace safesteer {

embedspace::AnchorSet resolve_anchors(const RunConfig& cfg, const synthlab::TaskSpec& task) {
  embedspace::AnchorSet anchors = task.anchors();
  if (!cfg.safe_anchor_file.empty()) anchors.safe = load_point_table(cfg.safe_anchor_file);
  if (!cfg.unsafe_anchor_file.empty()) anchors.unsafe = load_point_table(cfg.unsafe_anchor_file);
  for (const auto* list : {&anchors.safe, &anchors.unsafe}) {
    for (const auto& p : *list) diffnum::require_size(p, task.data_dim, "anchor point");
  }
  return anchors;
}

std::shared_ptr<const reward::RewardModel> build_reward_model(const RunConfig& cfg, const synthlab::TaskSpec& task) {
  auto encoder = embedspace::SyntheticEncoder::seeded(cfg.embed_dim, task.data_dim, cfg.encoder_seed, cfg.encoder_offset);
  return std::make_shared<const reward::RewardModel>(cfg.reward, std::move(encoder), resolve_anchors(cfg, task),
                                                     task.centers());
}

Experiment build_experiment(const RunConfig& cfg, bool pretrain) {
  cfg.validate();
  synthlab::TaskSpec task = synthlab::make_task(cfg.preset, cfg.task_seed);
  auto reward = build_reward_model(cfg, task);
  auto schedule = diffuser::NoiseSchedule::exponential(cfg.steps, cfg.eta, cfg.alpha_bar_start, cfg.alpha_bar_end);
  auto model = diffuser::DenoiserModel::create(task.data_dim, static_cast<diffnum::Index>(task.prompts.size()),
                                               cfg.hidden, cfg.init_seed);
  if (!pretrain) return Experiment{cfg, std::move(task), std::move(reward), std::move(schedule), std::move(model)};
  diffuser::PretrainConfig pre;
  pre.steps = cfg.pretrain_steps;
  pre.batch = cfg.pretrain_batch;
  pre.lr = cfg.pretrain_lr;
  pre.cond_dropout = cfg.cond_dropout;
  pre.data_spread = task.mode_spread;
  pre.alpha_bar_start = cfg.alpha_bar_start;
  pre.alpha_bar_end = cfg.alpha_bar_end;
  diffuser::pretrain_denoiser(model, task.centers(), pre, diffnum::mix_seed(cfg.init_seed, 0xBA5E));
  return Experiment{cfg, std::move(task), std::move(reward), std::move(schedule), std::move(model)};
}

diffuser::DenoiserModel model_from_checkpoint(const Experiment& exp, const Checkpoint& ckpt) {
  if (ckpt.config_hash != config_hash(exp.config)) {
    throw ConfigError("checkpoint was written for a different configuration (hash mismatch)");
  }
  if (ckpt.layer_sizes != exp.base_model.net.layer_sizes()) throw ConfigError("checkpoint layer sizes do not match the config");
  diffuser::DenoiserModel model = exp.base_model;
  model.net.set_params(ckpt.params);
  return model;
}

Checkpoint checkpoint_of(const RunConfig& cfg, const diffuser::DenoiserModel& model) {
  return Checkpoint{config_hash(cfg), model.net.layer_sizes(), model.net.params()};
}

synthlab::Policy make_policy(const diffuser::DenoiserModel& model, const diffuser::NoiseSchedule& schedule,
                             double guidance) {
  return [&model, &schedule, guidance](int prompt, diffnum::Rng& rng) {
    const auto z_T = diffnum::standard_normal(model.latent_dim, rng);
    return diffuser::sample(model, schedule, prompt, guidance, z_T, rng);
  };
}

EvalReport evaluate(const Experiment& exp, const diffuser::DenoiserModel& model, const diffuser::NoiseSchedule& schedule,
                    int samples_per_prompt, std::uint64_t seed) {
  const auto policy = make_policy(model, schedule, exp.config.guidance);
  EvalReport r;
  r.unsafe_rate = synthlab::unsafe_rate(policy, exp.task.unsafe_prompts(), exp.task, samples_per_prompt,
                                        exp.config.unsafe_threshold, seed);
  r.utility = synthlab::utility_score(policy, exp.task.safe_prompts(), exp.task, exp.reward->encoder(),
                                      samples_per_prompt, seed);
  return r;
}

grpo::TrainResult run_training(const Experiment& exp, const grpo::TrainHooks& hooks) {
  grpo::TrainSetup setup;
  setup.task = &exp.task;
  setup.reward = exp.reward.get();
  setup.rollout = {&exp.schedule, exp.config.guidance, exp.config.workers};
  setup.grpo = exp.config.grpo;
  setup.unsafe_threshold = exp.config.unsafe_threshold;
  setup.seed = exp.config.seed;
  return grpo::train_run(setup, exp.base_model, exp.config.epochs, hooks);
}

}  // namespace safesteer
