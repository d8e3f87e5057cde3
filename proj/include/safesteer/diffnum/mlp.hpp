// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "safesteer/diffnum/dense.hpp"
#include "safesteer/errors.hpp"

namespace safesteer::diffnum {

// Accumulated gradient with respect to a flat parameter vector.
template <typename Scalar>
struct GradientBuffer {
  Vector<Scalar> values;

  GradientBuffer() = default;
  explicit GradientBuffer(Index n) : values(Vector<Scalar>::Zero(n)) {}

  Index size() const { return values.size(); }
  void reset() { values.setZero(); }
  GradientBuffer& operator+=(const GradientBuffer& other) {
    require_size(other.values, values.size(), "GradientBuffer::operator+=");
    values += other.values;
    return *this;
  }
};

// Fully connected network, tanh on hidden layers and identity on the output.
//
// Parameters live in one flat vector. Layer l occupies a column-major
// (out x in) weight block followed by its out-length bias, so the parameter
// count is sum over layers of (in + 1) * out.
template <typename Scalar>
class MlpNetwork {
 public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;
  using WeightMap = Eigen::Map<const MatrixType>;
  using BiasMap = Eigen::Map<const VectorType>;

  // Activations recorded by a forward pass; `layers[0]` is the input and
  // `layers[l]` the post-activation output of layer l.
  struct Tape {
    std::vector<VectorType> layers;
    const VectorType& output() const { return layers.back(); }
  };

  MlpNetwork() = default;

  explicit MlpNetwork(std::vector<Index> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ConfigError("MlpNetwork needs at least an input and an output layer");
    for (Index s : sizes_) {
      if (s <= 0) throw ConfigError("MlpNetwork layer sizes must be positive");
    }
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(offsets_.back() + (sizes_[l] + 1) * sizes_[l + 1]);
    }
    params_ = VectorType::Zero(offsets_.back());
  }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static MlpNetwork random(std::vector<Index> layer_sizes, std::uint64_t seed) {
    MlpNetwork net(std::move(layer_sizes));
    Rng rng(seed);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(net.sizes_[l]));
      std::uniform_real_distribution<Scalar> uniform(-bound, bound);
      for (Index i = net.offsets_[l]; i < net.offsets_[l + 1]; ++i) net.params_[i] = uniform(rng);
    }
    return net;
  }

  const std::vector<Index>& layer_sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  Index input_size() const { return sizes_.front(); }
  Index output_size() const { return sizes_.back(); }
  Index parameter_count() const { return params_.size(); }

  const VectorType& params() const { return params_; }
  VectorType& params() { return params_; }
  void set_params(const VectorType& p) {
    require_size(p, params_.size(), "MlpNetwork::set_params");
    params_ = p;
  }

  WeightMap weights(std::size_t l) const {
    return WeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  BiasMap bias(std::size_t l) const {
    return BiasMap(params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]);
  }

  Tape record(const Eigen::Ref<const VectorType>& input) const {
    require_size(input, input_size(), "MlpNetwork input");
    if (!input.allFinite()) throw DegenerateError("MlpNetwork input has non-finite entries");
    Tape tape;
    tape.layers.reserve(sizes_.size());
    tape.layers.emplace_back(input);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      VectorType pre = weights(l) * tape.layers.back() + bias(l);
      if (l + 1 < num_layers()) pre = pre.array().tanh().matrix();
      tape.layers.push_back(std::move(pre));
    }
    return tape;
  }

  VectorType forward(const Eigen::Ref<const VectorType>& input) const { return record(input).output(); }

  // Accumulates d(cotangent . output)/d(params) into `grad` and returns
  // d(cotangent . output)/d(input).
  VectorType backward(const Tape& tape, const Eigen::Ref<const VectorType>& cotangent,
                      GradientBuffer<Scalar>& grad) const {
    require_size(cotangent, output_size(), "MlpNetwork output cotangent");
    require_size(grad.values, parameter_count(), "MlpNetwork gradient buffer");
    VectorType delta = cotangent;
    for (std::size_t l = num_layers(); l-- > 0;) {
      if (l + 1 < num_layers()) {
        delta.array() *= Scalar(1) - tape.layers[l + 1].array().square();
      }
      const VectorType& in = tape.layers[l];
      const Index rows = sizes_[l + 1];
      const Index cols = sizes_[l];
      Eigen::Map<MatrixType> dw(grad.values.data() + offsets_[l], rows, cols);
      Eigen::Map<VectorType> db(grad.values.data() + offsets_[l] + rows * cols, rows);
      dw.noalias() += delta * in.transpose();
      db += delta;
      delta = weights(l).transpose() * delta;
    }
    return delta;
  }

  VectorType backward(const Eigen::Ref<const VectorType>& input, const Eigen::Ref<const VectorType>& cotangent,
                      GradientBuffer<Scalar>& grad) const {
    return backward(record(input), cotangent, grad);
  }

 private:
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
  VectorType params_;
};

using Mlp = MlpNetwork<double>;
using Gradient = GradientBuffer<double>;

}  // namespace safesteer::diffnum
