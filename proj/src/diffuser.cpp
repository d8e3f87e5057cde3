// SPDX-License-Identifier: Apache-2.0
#include "safesteer/diffuser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

#include "safesteer/diffnum/adam.hpp"
#include "safesteer/errors.hpp"

namespace safesteer::diffuser {

namespace {

constexpr double kMinAlphaBar = 1e-4;

// Negative values at rounding level are treated as zero.
double direction_coefficient(const NoiseSchedule& s, int t) {
  const double sig = s.sigma(t);
  double rem = 1.0 - s.alpha_bar(t - 1) - sig * sig;
  if (rem < 0.0) {
    if (rem < -1e-14) throw ConfigError("invalid schedule: 1 - alpha_bar_{t-1} - sigma_t^2 < 0 at t=" + std::to_string(t));
    rem = 0.0;
  }
  return std::sqrt(rem);
}

void check_step(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.steps()) throw ConfigError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(s.steps()));
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, double eta) : alpha_bar_(std::move(alpha_bar)), eta_(eta) {
  if (alpha_bar_.size() < 2) throw ConfigError("noise schedule needs at least one step");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
    const double a = alpha_bar_[i];
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha_bar values must lie in (0, 1]");
    if (i > 0 && !(a < alpha_bar_[i - 1])) throw ConfigError("alpha_bar must be strictly decreasing");
  }
  sigma_.assign(alpha_bar_.size(), 0.0);
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    const double ab_t = alpha_bar_[t];
    const double ab_prev = alpha_bar_[t - 1];
    sigma_[t] = eta_ * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
  }
}

double NoiseSchedule::exponential_alpha_bar(double tau, double alpha_bar_start, double alpha_bar_end) {
  const double rate = std::log(alpha_bar_start / alpha_bar_end);
  return std::clamp(alpha_bar_start * std::exp(-rate * tau), kMinAlphaBar, 1.0);
}

NoiseSchedule NoiseSchedule::exponential(int steps, double eta, double alpha_bar_start, double alpha_bar_end) {
  if (steps < 1) throw ConfigError("schedule needs steps >= 1");
  if (!(alpha_bar_start <= 1.0 && alpha_bar_end > 0.0 && alpha_bar_end < alpha_bar_start)) {
    throw ConfigError("schedule needs 0 < alpha_bar_end < alpha_bar_start <= 1");
  }
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    ab[static_cast<std::size_t>(t)] =
        exponential_alpha_bar(static_cast<double>(t) / steps, alpha_bar_start, alpha_bar_end);
  }
  return NoiseSchedule(std::move(ab), eta);
}

std::uint64_t NoiseSchedule::fingerprint() const {
  std::uint64_t h = fnv1a(alpha_bar_.data(), alpha_bar_.size() * sizeof(double));
  return fnv1a(&eta_, sizeof(double), h);
}

DenoiserModel DenoiserModel::create(Index latent_dim, Index num_prompts, const std::vector<Index>& hidden,
                                    std::uint64_t seed) {
  if (latent_dim < 1 || num_prompts < 1) throw ConfigError("denoiser needs latent_dim >= 1 and at least one prompt");
  std::vector<Index> sizes{latent_dim + num_prompts + 1};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(latent_dim);
  DenoiserModel model;
  model.net = diffnum::Mlp::random(sizes, seed);
  model.latent_dim = latent_dim;
  model.conditions = MatrixXd::Identity(num_prompts, num_prompts);
  return model;
}

VectorXd DenoiserModel::input(const VectorXd& z, double tau, std::optional<int> prompt) const {
  diffnum::require_size(z, latent_dim, "denoiser latent");
  VectorXd x(latent_dim + cond_dim() + 1);
  x.head(latent_dim) = z;
  if (prompt) {
    if (*prompt < 0 || *prompt >= num_prompts()) throw ConfigError("prompt id out of range");
    x.segment(latent_dim, cond_dim()) = conditions.col(*prompt);
  } else {
    x.segment(latent_dim, cond_dim()).setZero();
  }
  x[x.size() - 1] = tau;
  return x;
}

VectorXd predict_noise(const DenoiserModel& model, const VectorXd& z, double tau, int prompt, double guidance) {
  VectorXd eps_c = model.net.forward(model.input(z, tau, prompt));
  if (guidance == 1.0) return eps_c;
  const VectorXd eps_u = model.net.forward(model.input(z, tau, std::nullopt));
  return eps_u + guidance * (eps_c - eps_u);
}

VectorXd ddim_mean_from_eps(const NoiseSchedule& schedule, const VectorXd& z_t, int t, const VectorXd& eps_hat) {
  check_step(schedule, t);
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - 1);
  const double dir = direction_coefficient(schedule, t);
  const VectorXd x0_hat = (z_t - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
  return std::sqrt(ab_prev) * x0_hat + dir * eps_hat;
}

VectorXd ddim_mean(const DenoiserModel& model, const NoiseSchedule& schedule, const VectorXd& z_t, int t, int prompt,
                   double guidance) {
  check_step(schedule, t);
  return ddim_mean_from_eps(schedule, z_t, t, predict_noise(model, z_t, schedule.tau(t), prompt, guidance));
}

double gaussian_log_density(const VectorXd& x, const VectorXd& mean, double sigma) {
  if (!(sigma > 0.0)) throw DegenerateError("Gaussian log-density needs sigma > 0");
  diffnum::require_size(mean, x.size(), "Gaussian mean");
  const double var = sigma * sigma;
  const double dim = static_cast<double>(x.size());
  return -(x - mean).squaredNorm() / (2.0 * var) - 0.5 * dim * std::log(2.0 * std::numbers::pi * var);
}

StepResult ddim_step(const DenoiserModel& model, const NoiseSchedule& schedule, const VectorXd& z_t, int t, int prompt,
                     double guidance, diffnum::Rng& rng, bool want_log_prob) {
  const double sig = schedule.sigma(t);
  if (want_log_prob && !(sig > 0.0)) {
    throw DegenerateError("transition density requested at sigma_t = 0 (eta = 0 sampler)");
  }
  const VectorXd mu = ddim_mean(model, schedule, z_t, t, prompt, guidance);
  StepResult out;
  if (sig > 0.0) {
    out.z_prev = mu + sig * diffnum::standard_normal(mu.size(), rng);
  } else {
    out.z_prev = mu;
  }
  if (want_log_prob) out.log_prob = gaussian_log_density(out.z_prev, mu, sig);
  return out;
}

double Trajectory::total_log_prob() const {
  double sum = 0.0;
  for (double lp : log_probs) sum += lp;
  return sum;
}

std::vector<Trajectory> rollout(const DenoiserModel& model, const NoiseSchedule& schedule, int prompt, int group_size,
                                double guidance, const VectorXd& z_T, std::uint64_t seed) {
  if (group_size < 2) throw ConfigError("rollout needs group size K >= 2");
  const int steps = schedule.steps();
  std::vector<Trajectory> group(static_cast<std::size_t>(group_size));
  for (int k = 0; k < group_size; ++k) {
    Trajectory& tr = group[static_cast<std::size_t>(k)];
    tr.prompt = prompt;
    tr.noise_seed = diffnum::mix_seed(seed, static_cast<std::uint64_t>(k));
    tr.schedule_fingerprint = schedule.fingerprint();
    tr.latents.assign(static_cast<std::size_t>(steps) + 1, VectorXd());
    tr.log_probs.assign(static_cast<std::size_t>(steps), 0.0);
    tr.latents[static_cast<std::size_t>(steps)] = z_T;
    diffnum::Rng rng(tr.noise_seed);
    for (int t = steps; t >= 1; --t) {
      // A deterministic step (sigma_t = 0) has no density; it is stored as NaN.
      const bool has_density = schedule.sigma(t) > 0.0;
      StepResult step =
          ddim_step(model, schedule, tr.latents[static_cast<std::size_t>(t)], t, prompt, guidance, rng, has_density);
      tr.latents[static_cast<std::size_t>(t - 1)] = std::move(step.z_prev);
      tr.log_probs[static_cast<std::size_t>(t - 1)] =
          has_density ? *step.log_prob : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return group;
}

namespace {

void check_replay(const Trajectory& traj, const NoiseSchedule& schedule) {
  if (traj.steps() != schedule.steps() || traj.latents.size() != traj.log_probs.size() + 1 ||
      traj.schedule_fingerprint != schedule.fingerprint()) {
    throw ReplayError("trajectory was not sampled under this noise schedule");
  }
}

}  // namespace

std::vector<double> logprob_under(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule,
                                  double guidance) {
  check_replay(traj, schedule);
  std::vector<double> out(traj.log_probs.size());
  for (int t = 1; t <= schedule.steps(); ++t) {
    const auto& z_t = traj.latents[static_cast<std::size_t>(t)];
    const VectorXd mu = ddim_mean(model, schedule, z_t, t, traj.prompt, guidance);
    out[static_cast<std::size_t>(t - 1)] =
        gaussian_log_density(traj.latents[static_cast<std::size_t>(t - 1)], mu, schedule.sigma(t));
  }
  return out;
}

double step_logprob_backward(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule, int t,
                             double guidance, double cotangent, diffnum::Gradient& grad) {
  return step_logprob_backward(model, traj, schedule, t, guidance, [cotangent](double) { return cotangent; }, grad);
}

double step_logprob_backward(const DenoiserModel& model, const Trajectory& traj, const NoiseSchedule& schedule, int t,
                             double guidance, const std::function<double(double)>& cotangent_of,
                             diffnum::Gradient& grad) {
  check_replay(traj, schedule);
  check_step(schedule, t);
  const VectorXd& z_t = traj.latents[static_cast<std::size_t>(t)];
  const VectorXd& z_prev = traj.latents[static_cast<std::size_t>(t - 1)];
  const double tau = schedule.tau(t);
  const double sig = schedule.sigma(t);

  const auto tape_c = model.net.record(model.input(z_t, tau, traj.prompt));
  VectorXd eps_hat = tape_c.output();
  std::optional<diffnum::Mlp::Tape> tape_u;
  if (guidance != 1.0) {
    tape_u = model.net.record(model.input(z_t, tau, std::nullopt));
    eps_hat = tape_u->output() + guidance * (tape_c.output() - tape_u->output());
  }
  const VectorXd mu = ddim_mean_from_eps(schedule, z_t, t, eps_hat);
  const double log_p = gaussian_log_density(z_prev, mu, sig);
  const double cotangent = cotangent_of(log_p);
  if (cotangent == 0.0) return log_p;

  // d log p / d mu = (z_prev - mu) / sigma^2; mu is affine in eps_hat.
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - 1);
  const double dmu_deps =
      direction_coefficient(schedule, t) - std::sqrt(ab_prev) * std::sqrt(1.0 - ab_t) / std::sqrt(ab_t);
  const VectorXd g_eps = cotangent * dmu_deps * (z_prev - mu) / (sig * sig);
  if (tape_u) {
    model.net.backward(tape_c, guidance * g_eps, grad);
    model.net.backward(*tape_u, (1.0 - guidance) * g_eps, grad);
  } else {
    model.net.backward(tape_c, g_eps, grad);
  }
  return log_p;
}

VectorXd sample(const DenoiserModel& model, const NoiseSchedule& schedule, int prompt, double guidance,
                const VectorXd& z_T, diffnum::Rng& rng) {
  VectorXd z = z_T;
  for (int t = schedule.steps(); t >= 1; --t) {
    z = ddim_step(model, schedule, z, t, prompt, guidance, rng, false).z_prev;
  }
  return z;
}

double pretrain_denoiser(DenoiserModel& model, const std::vector<VectorXd>& targets, const PretrainConfig& cfg,
                         std::uint64_t seed) {
  if (static_cast<Index>(targets.size()) != model.num_prompts()) {
    throw DimensionError("pretrain: one target per prompt required");
  }
  if (cfg.steps <= 0) return 0.0;
  if (cfg.batch < 1) throw ConfigError("pretrain batch must be >= 1");
  diffnum::Rng rng(seed);
  std::uniform_int_distribution<int> pick_prompt(0, static_cast<int>(targets.size()) - 1);
  std::uniform_real_distribution<double> pick_tau(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  diffnum::AdamState<double> adam(model.net.parameter_count());
  diffnum::AdamConfig opt{cfg.lr, 0.9, 0.999, 1e-8};
  diffnum::Gradient grad(model.net.parameter_count());
  double last_loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    grad.reset();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const int prompt = pick_prompt(rng);
      const double tau = 1.0 - pick_tau(rng);  // (0, 1]
      const double ab = NoiseSchedule::exponential_alpha_bar(tau, cfg.alpha_bar_start, cfg.alpha_bar_end);
      const VectorXd x0 = targets[static_cast<std::size_t>(prompt)] +
                          cfg.data_spread * diffnum::standard_normal(model.latent_dim, rng);
      const VectorXd eps = diffnum::standard_normal(model.latent_dim, rng);
      const VectorXd z = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
      const std::optional<int> cond = coin(rng) < cfg.cond_dropout ? std::nullopt : std::optional<int>(prompt);
      const auto tape = model.net.record(model.input(z, tau, cond));
      const VectorXd resid = tape.output() - eps;
      loss += resid.squaredNorm();
      model.net.backward(tape, (2.0 / cfg.batch) * resid, grad);
    }
    last_loss = loss / cfg.batch;
    diffnum::adam_step<double>(model.net.params(), grad.values, adam, opt);
  }
  return last_loss;
}

}  // namespace safesteer::diffuser
