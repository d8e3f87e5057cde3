// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "safesteer/diffnum/dense.hpp"

namespace safesteer::diffnum {

// Central-difference gradient, one function pair per coordinate.
template <typename Scalar, typename Fn>
Vector<Scalar> fd_gradient(Fn&& f, const Vector<Scalar>& params, Scalar step) {
  if (!(step > Scalar(0))) throw ConfigError("fd_gradient: step must be positive");
  Vector<Scalar> grad(params.size());
  Vector<Scalar> probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    const Scalar saved = probe[i];
    probe[i] = saved + step;
    const Scalar up = f(probe);
    probe[i] = saved - step;
    const Scalar down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (Scalar(2) * step);
  }
  return grad;
}

}  // namespace safesteer::diffnum
