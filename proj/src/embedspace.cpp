// SPDX-License-Identifier: Apache-2.0
#include "safesteer/embedspace.hpp"

#include <cmath>
#include <string>

#include "safesteer/errors.hpp"

namespace safesteer::embedspace {

UnitEmbedding::UnitEmbedding(VectorXd values) : values_(std::move(values)) {
  if (values_.size() < 2) throw DimensionError("UnitEmbedding needs dimension >= 2");
  if (!values_.allFinite() || std::abs(values_.norm() - 1.0) > kUnitTolerance) {
    throw DegenerateError("UnitEmbedding: vector is not unit norm");
  }
}

UnitEmbedding UnitEmbedding::normalized(const VectorXd& v) {
  if (v.size() < 2) throw DimensionError("UnitEmbedding needs dimension >= 2");
  const double n = v.norm();
  if (!std::isfinite(n) || n < kDegenerateNorm) throw DegenerateError("cannot normalize a (near-)zero vector");
  VectorXd u = v / n;
  // One more pass keeps |u| - 1 at rounding level even for badly scaled input.
  u /= u.norm();
  return UnitEmbedding(std::move(u), Trusted{});
}

double UnitEmbedding::dot(const UnitEmbedding& other) const {
  diffnum::require_size(other.values_, values_.size(), "UnitEmbedding::dot");
  return values_.dot(other.values_);
}

SyntheticEncoder::SyntheticEncoder(MatrixXd projection, VectorXd offset)
    : projection_(std::move(projection)), offset_(std::move(offset)) {
  if (projection_.rows() < 2) throw DimensionError("encoder embedding dimension must be >= 2");
  diffnum::require_size(offset_, projection_.rows(), "encoder offset");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(projection_);
  if (qr.rank() < std::min(projection_.rows(), projection_.cols())) {
    throw DegenerateError("encoder projection is rank deficient");
  }
}

SyntheticEncoder SyntheticEncoder::seeded(Index embed_dim, Index data_dim, std::uint64_t seed, double offset_norm) {
  if (embed_dim < 2 || data_dim < 1) throw ConfigError("encoder dimensions must satisfy d >= 2, m >= 1");
  if (embed_dim <= data_dim) throw ConfigError("encoder needs embed_dim > data_dim to place an orthogonal offset");
  if (!(offset_norm >= 0.0)) throw ConfigError("encoder offset norm must be nonnegative");
  for (std::uint64_t attempt = 0;; ++attempt) {
    diffnum::Rng rng(diffnum::mix_seed(seed, attempt));
    MatrixXd raw(embed_dim, data_dim + 1);
    for (Index c = 0; c < raw.cols(); ++c) raw.col(c) = diffnum::standard_normal(embed_dim, rng);
    Eigen::ColPivHouseholderQR<MatrixXd> rank_check(raw);
    if (rank_check.rank() < data_dim + 1) continue;
    // Gram-Schmidt via Householder QR: first m columns span the projection,
    // the next column supplies the offset direction orthogonal to it.
    Eigen::HouseholderQR<MatrixXd> qr(raw);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(embed_dim, data_dim + 1);
    MatrixXd w = q.leftCols(data_dim);
    VectorXd b = q.col(data_dim) * offset_norm;
    return SyntheticEncoder(std::move(w), std::move(b));
  }
}

UnitEmbedding SyntheticEncoder::encode(const VectorXd& point) const {
  diffnum::require_size(point, data_dim(), "encoder input");
  return UnitEmbedding::normalized(projection_ * point + offset_);
}

namespace {

VectorXd mean_embedding(const SyntheticEncoder& enc, const std::vector<VectorXd>& points) {
  VectorXd sum = VectorXd::Zero(enc.embed_dim());
  for (const auto& p : points) sum += enc.encode(p).values();
  return sum / static_cast<double>(points.size());
}

}  // namespace

SafetyDirection build_safety_direction(const SyntheticEncoder& enc, const AnchorSet& anchors) {
  if (anchors.safe.empty() || anchors.unsafe.empty()) {
    throw ConfigError("anchor set needs at least one safe and one unsafe anchor");
  }
  const VectorXd diff = mean_embedding(enc, anchors.safe) - mean_embedding(enc, anchors.unsafe);
  if (diff.norm() < kDegenerateNorm) throw DegenerateError("safe and unsafe anchors are indistinguishable");
  return SafetyDirection(UnitEmbedding::normalized(diff));
}

double text_safety_score(const UnitEmbedding& z, const SafetyDirection& v) { return z.dot(v.direction()); }

UnitEmbedding steer(const UnitEmbedding& z, const SafetyDirection& v, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("steering strength must be finite and >= 0");
  diffnum::require_size(v.values(), z.dim(), "steer direction");
  if (alpha == 0.0) return z;
  const VectorXd shifted = z.values() + alpha * v.values();
  if (shifted.norm() < kDegenerateNorm) throw DegenerateError("steer: z + alpha * v vanishes");
  return UnitEmbedding::normalized(shifted);
}

}  // namespace safesteer::embedspace
