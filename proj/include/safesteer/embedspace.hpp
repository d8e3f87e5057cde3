// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "safesteer/diffnum/dense.hpp"

namespace safesteer::embedspace {

using diffnum::Index;
using diffnum::MatrixXd;
using diffnum::VectorXd;

inline constexpr double kUnitTolerance = 1e-9;
inline constexpr double kDegenerateNorm = 1e-12;

// A point on the unit sphere of R^d, d >= 2.
class UnitEmbedding {
 public:
  // Wraps an already-normalized vector; throws if |v| differs from 1 by more
  // than kUnitTolerance.
  explicit UnitEmbedding(VectorXd values);

  // normalize(v); DegenerateError when |v| < kDegenerateNorm.
  static UnitEmbedding normalized(const VectorXd& v);

  const VectorXd& values() const { return values_; }
  Index dim() const { return values_.size(); }
  double dot(const UnitEmbedding& other) const;

 private:
  struct Trusted {};
  UnitEmbedding(VectorXd values, Trusted) : values_(std::move(values)) {}
  VectorXd values_;
};

// Affine map into R^d followed by normalization. Stands in for both the text
// and the image tower of a contrastive reward model.
class SyntheticEncoder {
 public:
  SyntheticEncoder(MatrixXd projection, VectorXd offset);

  // Seeded construction: W has orthonormal columns, b is orthogonal to the
  // column space of W and has length `offset_norm`. The large shared offset
  // reproduces the narrow cone that contrastive embeddings occupy.
  static SyntheticEncoder seeded(Index embed_dim, Index data_dim, std::uint64_t seed, double offset_norm);

  Index embed_dim() const { return projection_.rows(); }
  Index data_dim() const { return projection_.cols(); }
  const MatrixXd& projection() const { return projection_; }
  const VectorXd& offset() const { return offset_; }

  UnitEmbedding encode(const VectorXd& point) const;

 private:
  MatrixXd projection_;
  VectorXd offset_;
};

struct AnchorSet {
  std::vector<VectorXd> safe;
  std::vector<VectorXd> unsafe;
};

class SafetyDirection {
 public:
  explicit SafetyDirection(UnitEmbedding direction) : direction_(std::move(direction)) {}
  const UnitEmbedding& direction() const { return direction_; }
  const VectorXd& values() const { return direction_.values(); }

 private:
  UnitEmbedding direction_;
};

// normalize(mean encode(safe) - mean encode(unsafe)).
SafetyDirection build_safety_direction(const SyntheticEncoder& enc, const AnchorSet& anchors);

// Cosine of a prompt embedding with the safety direction; negative means the
// prompt leans toward the unsafe anchors.
double text_safety_score(const UnitEmbedding& z, const SafetyDirection& v);

// normalize(z + alpha * v), alpha >= 0.
UnitEmbedding steer(const UnitEmbedding& z, const SafetyDirection& v, double alpha);

}  // namespace safesteer::embedspace
