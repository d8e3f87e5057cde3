// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "safesteer/diffnum/adam.hpp"
#include "safesteer/diffuser.hpp"
#include "safesteer/reward.hpp"
#include "safesteer/synthlab.hpp"

namespace safesteer::grpo {

using diffnum::VectorXd;
using diffuser::DenoiserModel;
using diffuser::NoiseSchedule;
using diffuser::Trajectory;

struct GrpoConfig {
  int group_size = 16;            // K
  double clip_range = 1e-4;       // epsilon
  double delta = 1e-4;            // advantage denominator stabilizer
  double kl_coef = 0.5;           // beta_KL
  int inner_epochs = 3;           // M
  double adv_clip = 5.0;          // advantages clipped to [-adv_clip, adv_clip]
  double grad_clip = 1.0;         // global gradient-norm bound
  double timestep_fraction = 0.8; // train the last ceil(fraction * T) steps
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double kl_abort = 1.0;          // post-update KL above this aborts the run
  bool noise_per_group = false;   // default: one z_T shared by the whole batch

  void validate() const;
  bool operator==(const GrpoConfig&) const = default;
};

// (r - mean) / (population stdev + delta), then clipped to [-adv_clip, adv_clip].
// Constant groups give all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards, double delta, double adv_clip);

// Per-element objective pieces for one (trajectory, timestep) pair.
struct PairTerms {
  double ratio = 1.0;
  double surrogate = 0.0;       // max(-A rho, -A clip(rho, 1 - eps, 1 + eps))
  double kl = 0.0;              // (rho - 1) - log rho
  double d_surrogate = 0.0;     // d surrogate / d log p_new
  double d_kl = 0.0;            // d kl / d log p_new
  bool clipped = false;         // |rho - 1| > eps
};

PairTerms pair_terms(double new_logp, double old_logp, double advantage, double clip_range);

// Mean over timesteps of the clipped surrogate (to be minimized).
double surrogate_loss(std::span<const double> new_logps, std::span<const double> old_logps, double advantage,
                      double clip_range);

// Mean over timesteps of (rho - 1) - log rho.
double kl_penalty(std::span<const double> new_logps, std::span<const double> old_logps);

struct RolloutGroup {
  int prompt = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct RolloutBatch {
  std::vector<RolloutGroup> groups;
  std::size_t num_trajectories() const;
};

// Timesteps 1..ceil(fraction * T): the low-noise end of the chain.
std::vector<int> trained_timesteps(int steps, double fraction);

struct RolloutSettings {
  const NoiseSchedule* schedule = nullptr;
  double guidance = 1.0;
  int workers = 1;
};

// One group per prompt under the current (snapshot) parameters, rewarded on
// z_0 and normalized into advantages.
RolloutBatch collect_rollouts(const DenoiserModel& model, const RolloutSettings& settings,
                              const std::vector<int>& prompts, const reward::RewardModel& reward,
                              const GrpoConfig& cfg, std::uint64_t seed);

struct LossReport {
  double loss = 0.0;       // mean over pairs of surrogate + kl_coef * kl
  double surrogate = 0.0;  // mean surrogate term
  double kl = 0.0;         // mean kl term
  long clipped = 0;
  long pairs = 0;
};

// Full per-batch loss under `model` against the stored rollout log-probs.
LossReport batch_loss(const DenoiserModel& model, const RolloutBatch& batch, const RolloutSettings& settings,
                      const GrpoConfig& cfg);

// Same value, plus its gradient with respect to the model parameters written
// to `grad` (overwritten). Timesteps of each trajectory are visited in the
// order given by `shuffle_seed` (0 keeps natural order); per-trajectory
// contributions are summed in trajectory order.
LossReport batch_loss_gradient(const DenoiserModel& model, const RolloutBatch& batch, const RolloutSettings& settings,
                               const GrpoConfig& cfg, diffnum::Gradient& grad, std::uint64_t shuffle_seed = 0);

struct PolicyState {
  DenoiserModel model;
  diffnum::AdamState<double> optimizer;

  explicit PolicyState(DenoiserModel m) : model(std::move(m)), optimizer(model.net.parameter_count()) {}
};

struct StepMetrics {
  int step = 0;
  double reward_mean_safe = 0.0;
  double reward_mean_unsafe = 0.0;
  double kl_mean = 0.0;     // post-update KL against the rollout snapshot
  double clip_frac = 0.0;   // fraction of (pair, inner epoch) visits with |rho - 1| > eps
  double grad_norm = 0.0;   // mean pre-clipping gradient norm over inner epochs
  double unsafe_rate = 0.0; // oracle-flagged fraction of this step's unsafe-prompt rollouts

  bool operator==(const StepMetrics&) const = default;
};

// M inner epochs over a stored batch: one accumulated gradient, one global
// norm clip and one optimizer step per epoch. Throws DivergenceError on
// non-finite ratios or when the post-update KL exceeds cfg.kl_abort.
StepMetrics train_step(PolicyState& policy, const RolloutBatch& batch, const RolloutSettings& settings,
                       const GrpoConfig& cfg, std::uint64_t shuffle_seed);

struct TrainSetup {
  const synthlab::TaskSpec* task = nullptr;
  const reward::RewardModel* reward = nullptr;
  RolloutSettings rollout;
  GrpoConfig grpo;
  double unsafe_threshold = 0.6;
  std::uint64_t seed = 0;
};

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(int step, const DenoiserModel&)> on_checkpoint;
  int checkpoint_every = 0;
};

struct TrainResult {
  DenoiserModel model;
  std::vector<StepMetrics> history;
};

// Alternates rollout -> advantages -> train_step for `epochs` iterations,
// each rollout taken under the parameters left by the previous update.
TrainResult train_run(const TrainSetup& setup, DenoiserModel initial, int epochs, const TrainHooks& hooks = {});

}  // namespace safesteer::grpo
