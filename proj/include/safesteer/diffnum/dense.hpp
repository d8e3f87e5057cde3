// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "safesteer/errors.hpp"

namespace safesteer::diffnum {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using Index = Eigen::Index;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.allFinite();
}

template <typename Derived>
void require_size(const Eigen::DenseBase<Derived>& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(v.size()));
  }
}

// splitmix64 finalizer; used to derive independent stream seeds from
// (base seed, indices) tuples so that results do not depend on scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t x, std::uint64_t y, Rest... rest) {
  return mix_seed(mix_seed(x) ^ (y + 0x632BE59BD9B4E019ULL), rest...);
}

using Rng = std::mt19937_64;

template <typename Scalar = double>
Vector<Scalar> standard_normal(Index n, Rng& rng) {
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  Vector<Scalar> out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace safesteer::diffnum
