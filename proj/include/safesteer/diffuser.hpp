// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "safesteer/diffnum/dense.hpp"
#include "safesteer/diffnum/mlp.hpp"

namespace safesteer::diffuser {

using diffnum::Index;
using diffnum::MatrixXd;
using diffnum::VectorXd;

// Cumulative signal levels alpha_bar_0 > alpha_bar_1 > ... > alpha_bar_T and
// the DDIM noise scales sigma_t = eta * sqrt((1 - ab_{t-1}) / (1 - ab_t)) * sqrt(1 - ab_t / ab_{t-1}).
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha_bar, double eta);

  // alpha_bar(tau) = start * exp(-c * tau), tau = t / T, with c chosen so that
  // alpha_bar_T = end, clipped to [1e-4, 1]. Depends on t only through t / T,
  // so schedules with different step counts discretize the same curve.
  static NoiseSchedule exponential(int steps, double eta, double alpha_bar_start = 0.999, double alpha_bar_end = 1e-2);
  static double exponential_alpha_bar(double tau, double alpha_bar_start, double alpha_bar_end);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double eta() const { return eta_; }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  // t in 1..T; sigma(t) governs the transition z_t -> z_{t-1}.
  double sigma(int t) const { return sigma_.at(static_cast<std::size_t>(t)); }
  double tau(int t) const { return static_cast<double>(t) / steps(); }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  // Stable 64-bit digest of (alpha_bar, eta); stored in trajectories so replay
  // under a different schedule is detected.
  std::uint64_t fingerprint() const;

 private:
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  double eta_;
};

// eps_theta(z_t, t, c): an MLP over [z_t ; c ; t / T]. Conditions are rows of
// a fixed table (one-hot per prompt); the null condition used for the
// unconditional guidance branch is the zero vector.
struct DenoiserModel {
  diffnum::Mlp net;
  Index latent_dim = 0;
  MatrixXd conditions;  // cond_dim x num_prompts

  static DenoiserModel create(Index latent_dim, Index num_prompts, const std::vector<Index>& hidden, std::uint64_t seed);

  Index cond_dim() const { return conditions.rows(); }
  Index num_prompts() const { return conditions.cols(); }
  // prompt == nullopt selects the null condition.
  VectorXd input(const VectorXd& z, double tau, std::optional<int> prompt) const;
};

// eps_u + w * (eps_c - eps_u); w == 1 evaluates only the conditional branch.
VectorXd predict_noise(const DenoiserModel& model, const VectorXd& z, double tau, int prompt, double guidance);

// Deterministic part of the DDIM update:
// sqrt(ab_{t-1}) * x0_hat + sqrt(1 - ab_{t-1} - sigma_t^2) * eps_hat,
// x0_hat = (z_t - sqrt(1 - ab_t) * eps_hat) / sqrt(ab_t).
VectorXd ddim_mean(const DenoiserModel& model, const NoiseSchedule& schedule, const VectorXd& z_t, int t, int prompt,
                   double guidance);

// Same as ddim_mean with a precomputed noise prediction.
VectorXd ddim_mean_from_eps(const NoiseSchedule& schedule, const VectorXd& z_t, int t, const VectorXd& eps_hat);

// Log-density of N(mean, sigma^2 I) at x, including the normalizing constant.
double gaussian_log_density(const VectorXd& x, const VectorXd& mean, double sigma);

struct StepResult {
  VectorXd z_prev;
  std::optional<double> log_prob;
};

// One reverse step z_t -> z_{t-1} = mu + sigma_t * eps. With
// want_log_prob the step's Gaussian log-density is returned; that requires
// sigma_t > 0.
StepResult ddim_step(const DenoiserModel& model, const NoiseSchedule& schedule, const VectorXd& z_t, int t, int prompt,
                     double guidance, diffnum::Rng& rng, bool want_log_prob = true);

struct Trajectory {
  int prompt = 0;
  std::vector<VectorXd> latents;  // latents[t] = z_t, t = 0..T; latents[T] is the initial noise
  std::vector<double> log_probs;  // log_probs[t-1] = log p(z_{t-1} | z_t, c) under rollout parameters
  std::uint64_t noise_seed = 0;
  std::uint64_t schedule_fingerprint = 0;

  int steps() const { return static_cast<int>(log_probs.size()); }
  const VectorXd& sample() const { return latents.front(); }
  double total_log_prob() const;
};

// K trajectories for one prompt, all starting from z_T. Trajectory k draws
// its transition noise from Rng(mix_seed(seed, k)). Steps with sigma_t = 0
// record NaN log-probabilities.
std::vector<Trajectory> rollout(const DenoiserModel& model, const NoiseSchedule& schedule, int prompt, int group_size,
                                double guidance, const VectorXd& z_T, std::uint64_t seed);

// Per-step log-probabilities of the stored transitions under `model`.
std::vector<double> logprob_under(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule,
                                  double guidance);

// log p(z_{t-1} | z_t, c) for one stored transition; accumulates
// cotangent * d(log p)/d(params) into `grad` and returns log p.
double step_logprob_backward(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule, int t,
                             double guidance, double cotangent, diffnum::Gradient& grad);

// As above, with the cotangent computed from log p itself (one forward pass).
double step_logprob_backward(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule, int t,
                             double guidance, const std::function<double(double)>& cotangent_of,
                             diffnum::Gradient& grad);

// Runs the sampler from z_T to z_0 without recording densities; eta may be 0.
VectorXd sample(const DenoiserModel& model, const NoiseSchedule& schedule, int prompt, double guidance,
                const VectorXd& z_T, diffnum::Rng& rng);

struct PretrainConfig {
  int steps = 0;
  int batch = 64;
  double lr = 3e-3;
  double cond_dropout = 0.1;
  double data_spread = 0.05;
  double alpha_bar_start = 0.999;
  double alpha_bar_end = 1e-2;
};

// Fits eps_theta by denoising regression on isotropic Gaussian clouds around
// `targets[prompt]` with continuous tau ~ U(0, 1]. Produces the base model
// that post-training starts from. Returns the final mean-squared error.
double pretrain_denoiser(DenoiserModel& model, const std::vector<VectorXd>& targets, const PretrainConfig& cfg,
                         std::uint64_t seed);

}  // namespace safesteer::diffuser
