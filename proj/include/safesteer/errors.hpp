// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace safesteer {

// Shapes that do not line up (input length, cotangent length, buffer sizes).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A normalization or density that has no finite value: zero vectors fed to
// normalize(), sigma = 0 log-densities, indistinguishable anchors.
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid hyperparameters or run configuration. Carries an optional line
// number when raised by the config parser.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Stored trajectories replayed under a schedule they were not sampled with.
class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Policy update left the trust region (non-finite ratios, KL above the abort bound).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace safesteer
