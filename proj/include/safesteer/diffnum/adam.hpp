// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "safesteer/diffnum/dense.hpp"

namespace safesteer::diffnum {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Vector<Scalar> m;
  Vector<Scalar> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Index n) : m(Vector<Scalar>::Zero(n)), v(Vector<Scalar>::Zero(n)) {}
};

// Bias-corrected adaptive-moment update, no weight decay.
template <typename Scalar>
void adam_step(Eigen::Ref<Vector<Scalar>> params, const Eigen::Ref<const Vector<Scalar>>& grad,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("adam: learning rate must be positive");
  require_size(grad, params.size(), "adam gradient");
  if (state.m.size() == 0) state = AdamState<Scalar>(params.size());
  require_size(state.m, params.size(), "adam first moment");
  require_size(state.v, params.size(), "adam second moment");

  ++state.step;
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

// Rescales `grad` in place so its Euclidean norm is at most `max_norm`;
// returns the norm before clipping.
template <typename Scalar>
Scalar clip_global_norm(Eigen::Ref<Vector<Scalar>> grad, Scalar max_norm) {
  const Scalar norm = grad.norm();
  if (max_norm > Scalar(0) && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace safesteer::diffnum
