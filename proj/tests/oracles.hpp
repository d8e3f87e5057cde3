// SPDX-License-Identifier: Apache-2.0
//
// Straight-line reference arithmetic for the tests. Everything here uses
// plain loops over std::vector so it shares no code path with the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = std::vector<double>;

inline Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec normalize(const Vec& v) {
  const double n = std::sqrt(dot(v, v));
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

// Dense layers over a flat parameter list laid out per layer as a
// column-major (out x in) weight block followed by the bias.
inline Vec mlp_forward(const std::vector<long>& sizes, const Vec& params, const Vec& input) {
  Vec h = input;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(sizes[l]);
    const std::size_t out = static_cast<std::size_t>(sizes[l + 1]);
    Vec next(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = params[offset + in * out + r];
      for (std::size_t c = 0; c < in; ++c) acc += params[offset + c * out + r] * h[c];
      next[r] = (l + 2 < sizes.size()) ? std::tanh(acc) : acc;
    }
    offset += (in + 1) * out;
    h = next;
  }
  return h;
}

// y = W x + b, then divided by its length. W given column-major, d x m.
inline Vec encode(const Vec& w_colmajor, const Vec& b, const Vec& x) {
  const std::size_t d = b.size();
  Vec y = b;
  for (std::size_t c = 0; c < x.size(); ++c) {
    for (std::size_t r = 0; r < d; ++r) y[r] += w_colmajor[c * d + r] * x[c];
  }
  return normalize(y);
}

inline double gaussian_log_density(const Vec& x, const Vec& mean, double sigma) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  const double var = sigma * sigma;
  return -sq / (2.0 * var) - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi * var);
}

inline double ddim_sigma(double ab_t, double ab_prev, double eta) {
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
}

}  // namespace oracle
