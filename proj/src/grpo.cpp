// SPDX-License-Identifier: Apache-2.0
#include "safesteer/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "safesteer/errors.hpp"
#include "safesteer/parallel.hpp"

namespace safesteer::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(clip_range > 0.0)) throw ConfigError("grpo.clip_range must be > 0");
  if (!(delta > 0.0)) throw ConfigError("grpo.delta must be > 0");
  if (!(kl_coef >= 0.0)) throw ConfigError("grpo.kl_coef must be >= 0");
  if (inner_epochs < 1) throw ConfigError("grpo.inner_epochs must be >= 1");
  if (!(adv_clip > 0.0)) throw ConfigError("grpo.adv_clip must be > 0");
  if (!(grad_clip > 0.0)) throw ConfigError("grpo.grad_clip must be > 0");
  if (!(timestep_fraction > 0.0 && timestep_fraction <= 1.0)) throw ConfigError("grpo.timestep_fraction must lie in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("grpo.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("grpo.beta1/beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("grpo.adam_eps must be > 0");
  if (!(kl_abort > 0.0)) throw ConfigError("grpo.kl_abort must be > 0");
}

std::vector<double> group_advantages(std::span<const double> rewards, double delta, double adv_clip) {
  if (rewards.size() < 2) throw ConfigError("group advantages need K >= 2");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stdev = std::sqrt(var / n);
  std::vector<double> adv(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    const double a = (rewards[k] - mean) / (stdev + delta);
    adv[k] = std::clamp(a, -adv_clip, adv_clip);
  }
  return adv;
}

PairTerms pair_terms(double new_logp, double old_logp, double advantage, double clip_range) {
  const double diff = new_logp - old_logp;
  PairTerms p;
  p.ratio = std::exp(diff);
  if (!std::isfinite(p.ratio) || !std::isfinite(diff)) throw DivergenceError("importance ratio is not finite");
  const double clipped_ratio = std::clamp(p.ratio, 1.0 - clip_range, 1.0 + clip_range);
  const double unclipped_obj = -advantage * p.ratio;
  const double clipped_obj = -advantage * clipped_ratio;
  p.surrogate = std::max(unclipped_obj, clipped_obj);
  // Gradient flows only through the unclipped branch; when the clipped branch
  // wins, rho is outside the trust region and the term is constant.
  p.d_surrogate = unclipped_obj >= clipped_obj ? -advantage * p.ratio : 0.0;
  p.kl = std::expm1(diff) - diff;
  p.d_kl = std::expm1(diff);
  p.clipped = std::abs(p.ratio - 1.0) > clip_range;
  return p;
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("log-prob sequences must be nonempty and equally long");
}

}  // namespace

double surrogate_loss(std::span<const double> new_logps, std::span<const double> old_logps, double advantage,
                      double clip_range) {
  check_lengths(new_logps, old_logps);
  double sum = 0.0;
  for (std::size_t i = 0; i < new_logps.size(); ++i) {
    sum += pair_terms(new_logps[i], old_logps[i], advantage, clip_range).surrogate;
  }
  return sum / static_cast<double>(new_logps.size());
}

double kl_penalty(std::span<const double> new_logps, std::span<const double> old_logps) {
  check_lengths(new_logps, old_logps);
  double sum = 0.0;
  for (std::size_t i = 0; i < new_logps.size(); ++i) {
    const double diff = new_logps[i] - old_logps[i];
    if (!std::isfinite(diff)) throw DivergenceError("log-prob difference is not finite");
    sum += std::expm1(diff) - diff;
  }
  return sum / static_cast<double>(new_logps.size());
}

std::size_t RolloutBatch::num_trajectories() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.trajectories.size();
  return n;
}

std::vector<int> trained_timesteps(int steps, double fraction) {
  if (steps < 1) throw ConfigError("schedule needs steps >= 1");
  const int count = std::clamp(static_cast<int>(std::ceil(fraction * steps - 1e-12)), 1, steps);
  std::vector<int> ts(static_cast<std::size_t>(count));
  std::iota(ts.begin(), ts.end(), 1);
  return ts;
}

RolloutBatch collect_rollouts(const DenoiserModel& model, const RolloutSettings& settings,
                              const std::vector<int>& prompts, const reward::RewardModel& reward,
                              const GrpoConfig& cfg, std::uint64_t seed) {
  const NoiseSchedule& schedule = *settings.schedule;
  diffnum::Rng batch_noise_rng(diffnum::mix_seed(seed, 0xA11));
  const VectorXd shared = diffnum::standard_normal(model.latent_dim, batch_noise_rng);

  RolloutBatch batch;
  batch.groups.resize(prompts.size());
  parallel_for(prompts.size(), settings.workers, [&](std::size_t g) {
    const int prompt = prompts[g];
    VectorXd z_T = shared;
    if (cfg.noise_per_group) {
      diffnum::Rng rng(diffnum::mix_seed(seed, 0xA11, static_cast<std::uint64_t>(prompt)));
      z_T = diffnum::standard_normal(model.latent_dim, rng);
    }
    RolloutGroup& group = batch.groups[g];
    group.prompt = prompt;
    group.trajectories = diffuser::rollout(model, schedule, prompt, cfg.group_size, settings.guidance, z_T,
                                           diffnum::mix_seed(seed, static_cast<std::uint64_t>(prompt)));
    group.rewards.reserve(group.trajectories.size());
    for (const auto& tr : group.trajectories) group.rewards.push_back(reward(tr.sample(), prompt));
    group.advantages = group_advantages(group.rewards, cfg.delta, cfg.adv_clip);
  });
  return batch;
}

namespace {

struct FlatEntry {
  const Trajectory* traj;
  double advantage;
};

std::vector<FlatEntry> flatten(const RolloutBatch& batch) {
  std::vector<FlatEntry> out;
  out.reserve(batch.num_trajectories());
  for (const auto& g : batch.groups) {
    for (std::size_t k = 0; k < g.trajectories.size(); ++k) out.push_back({&g.trajectories[k], g.advantages.at(k)});
  }
  return out;
}

LossReport run_batch(const DenoiserModel& model, const RolloutBatch& batch, const RolloutSettings& settings,
                     const GrpoConfig& cfg, diffnum::Gradient* grad, std::uint64_t shuffle_seed) {
  const NoiseSchedule& schedule = *settings.schedule;
  const auto entries = flatten(batch);
  const auto steps = trained_timesteps(schedule.steps(), cfg.timestep_fraction);
  const double n_pairs = static_cast<double>(entries.size() * steps.size());
  if (entries.empty()) throw ConfigError("empty rollout batch");

  std::vector<LossReport> partial(entries.size());
  std::vector<diffnum::Gradient> partial_grad;
  if (grad) partial_grad.assign(entries.size(), diffnum::Gradient(model.net.parameter_count()));

  parallel_for(entries.size(), settings.workers, [&](std::size_t i) {
    const Trajectory& tr = *entries[i].traj;
    const double adv = entries[i].advantage;
    std::vector<int> order = steps;
    if (shuffle_seed != 0) {
      diffnum::Rng rng(diffnum::mix_seed(shuffle_seed, static_cast<std::uint64_t>(i)));
      std::shuffle(order.begin(), order.end(), rng);
    }
    LossReport& rep = partial[i];
    for (int t : order) {
      const double old_lp = tr.log_probs.at(static_cast<std::size_t>(t - 1));
      if (!std::isfinite(old_lp)) throw DivergenceError("stored rollout log-prob is not finite");
      PairTerms terms;
      if (grad) {
        diffuser::step_logprob_backward(
            model, tr, schedule, t, settings.guidance,
            [&](double new_lp) {
              terms = pair_terms(new_lp, old_lp, adv, cfg.clip_range);
              return (terms.d_surrogate + cfg.kl_coef * terms.d_kl) / n_pairs;
            },
            partial_grad[i]);
      } else {
        const auto& z_t = tr.latents.at(static_cast<std::size_t>(t));
        const VectorXd mu = diffuser::ddim_mean(model, schedule, z_t, t, tr.prompt, settings.guidance);
        const double new_lp =
            diffuser::gaussian_log_density(tr.latents.at(static_cast<std::size_t>(t - 1)), mu, schedule.sigma(t));
        terms = pair_terms(new_lp, old_lp, adv, cfg.clip_range);
      }
      rep.surrogate += terms.surrogate;
      rep.kl += terms.kl;
      rep.clipped += terms.clipped ? 1 : 0;
      ++rep.pairs;
    }
  });

  LossReport total;
  if (grad) grad->values.setZero(model.net.parameter_count());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    total.surrogate += partial[i].surrogate;
    total.kl += partial[i].kl;
    total.clipped += partial[i].clipped;
    total.pairs += partial[i].pairs;
    if (grad) grad->values += partial_grad[i].values;
  }
  total.surrogate /= n_pairs;
  total.kl /= n_pairs;
  total.loss = total.surrogate + cfg.kl_coef * total.kl;
  return total;
}

}  // namespace

LossReport batch_loss(const DenoiserModel& model, const RolloutBatch& batch, const RolloutSettings& settings,
                      const GrpoConfig& cfg) {
  return run_batch(model, batch, settings, cfg, nullptr, 0);
}

LossReport batch_loss_gradient(const DenoiserModel& model, const RolloutBatch& batch, const RolloutSettings& settings,
                               const GrpoConfig& cfg, diffnum::Gradient& grad, std::uint64_t shuffle_seed) {
  return run_batch(model, batch, settings, cfg, &grad, shuffle_seed);
}

StepMetrics train_step(PolicyState& policy, const RolloutBatch& batch, const RolloutSettings& settings,
                       const GrpoConfig& cfg, std::uint64_t shuffle_seed) {
  cfg.validate();
  const diffnum::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  diffnum::Gradient grad(policy.model.net.parameter_count());
  StepMetrics m;
  long clipped = 0;
  long visits = 0;
  double norm_sum = 0.0;
  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    const LossReport rep = batch_loss_gradient(
        policy.model, batch, settings, cfg, grad,
        diffnum::mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)) | 1ULL);
    clipped += rep.clipped;
    visits += rep.pairs;
    if (!grad.values.allFinite()) throw DivergenceError("non-finite policy gradient");
    norm_sum += diffnum::clip_global_norm<double>(grad.values, cfg.grad_clip);
    diffnum::adam_step<double>(policy.model.net.params(), grad.values, policy.optimizer, adam);
  }
  const LossReport after = batch_loss(policy.model, batch, settings, cfg);
  m.kl_mean = after.kl;
  m.clip_frac = visits > 0 ? static_cast<double>(clipped) / static_cast<double>(visits) : 0.0;
  m.grad_norm = norm_sum / cfg.inner_epochs;
  if (!(m.kl_mean <= cfg.kl_abort)) {
    throw DivergenceError("post-update KL " + std::to_string(m.kl_mean) + " exceeds abort threshold " +
                          std::to_string(cfg.kl_abort));
  }
  return m;
}

TrainResult train_run(const TrainSetup& setup, DenoiserModel initial, int epochs, const TrainHooks& hooks) {
  if (!setup.task || !setup.reward || !setup.rollout.schedule) throw ConfigError("train_run: incomplete setup");
  setup.grpo.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  const synthlab::TaskSpec& task = *setup.task;
  std::vector<int> prompts(task.prompts.size());
  std::iota(prompts.begin(), prompts.end(), 0);

  PolicyState policy(std::move(initial));
  TrainResult result;
  for (int step = 1; step <= epochs; ++step) {
    const std::uint64_t step_seed = diffnum::mix_seed(setup.seed, static_cast<std::uint64_t>(step));
    const RolloutBatch batch = collect_rollouts(policy.model, setup.rollout, prompts, *setup.reward, setup.grpo, step_seed);
    StepMetrics m = train_step(policy, batch, setup.rollout, setup.grpo, diffnum::mix_seed(step_seed, 0x5EED));
    m.step = step;

    double safe_sum = 0.0, unsafe_sum = 0.0;
    long safe_n = 0, unsafe_n = 0, flagged = 0;
    for (const auto& g : batch.groups) {
      const bool unsafe = task.prompts[static_cast<std::size_t>(g.prompt)].unsafe;
      for (std::size_t k = 0; k < g.trajectories.size(); ++k) {
        if (unsafe) {
          unsafe_sum += g.rewards[k];
          ++unsafe_n;
          if (synthlab::oracle_unsafe(g.trajectories[k].sample(), task) > setup.unsafe_threshold) ++flagged;
        } else {
          safe_sum += g.rewards[k];
          ++safe_n;
        }
      }
    }
    m.reward_mean_safe = safe_n ? safe_sum / static_cast<double>(safe_n) : 0.0;
    m.reward_mean_unsafe = unsafe_n ? unsafe_sum / static_cast<double>(unsafe_n) : 0.0;
    m.unsafe_rate = unsafe_n ? static_cast<double>(flagged) / static_cast<double>(unsafe_n) : 0.0;

    result.history.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && step % hooks.checkpoint_every == 0) {
      hooks.on_checkpoint(step, policy.model);
    }
  }
  result.model = std::move(policy.model);
  return result;
}

}  // namespace safesteer::grpo
