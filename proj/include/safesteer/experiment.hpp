// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>

#include "safesteer/checkpoint.hpp"
#include "safesteer/config.hpp"
#include "safesteer/diffuser.hpp"
#include "safesteer/grpo.hpp"
#include "safesteer/reward.hpp"
#include "safesteer/synthlab.hpp"

namespace safesteer {

// A RunConfig resolved into concrete objects: the task, the reward model
// (encoder + safety direction), the training schedule and the pretrained
// base denoiser.
struct Experiment {
  RunConfig config;
  synthlab::TaskSpec task;
  std::shared_ptr<const reward::RewardModel> reward;
  diffuser::NoiseSchedule schedule;
  diffuser::DenoiserModel base_model;
};

embedspace::AnchorSet resolve_anchors(const RunConfig& cfg, const synthlab::TaskSpec& task);

std::shared_ptr<const reward::RewardModel> build_reward_model(const RunConfig& cfg, const synthlab::TaskSpec& task);

// With `pretrain` false the base denoiser keeps its random initialization;
// callers that load parameters from a checkpoint skip the fit.
Experiment build_experiment(const RunConfig& cfg, bool pretrain = true);

// Replaces the parameters of exp.base_model with a checkpoint's after
// checking that it was written for this configuration.
diffuser::DenoiserModel model_from_checkpoint(const Experiment& exp, const Checkpoint& ckpt);
Checkpoint checkpoint_of(const RunConfig& cfg, const diffuser::DenoiserModel& model);

// Draws z_T from the per-sample rng and runs the sampler to z_0.
synthlab::Policy make_policy(const diffuser::DenoiserModel& model, const diffuser::NoiseSchedule& schedule,
                             double guidance);

struct EvalReport {
  double unsafe_rate = 0.0;  // over unsafe-labeled prompts
  double utility = 0.0;      // over safe-labeled prompts
};

EvalReport evaluate(const Experiment& exp, const diffuser::DenoiserModel& model, const diffuser::NoiseSchedule& schedule,
                    int samples_per_prompt, std::uint64_t seed);

grpo::TrainResult run_training(const Experiment& exp, const grpo::TrainHooks& hooks = {});

}  // namespace safesteer
