// SPDX-License-Identifier: Apache-2.0
#include "safesteer/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "safesteer/errors.hpp"

namespace safesteer::reward {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSteered: return "steered";
    case Variant::kPlainCosine: return "plain_cosine";
    case Variant::kSafeClipPosNeg: return "safeclip_posneg";
    case Variant::kNegOnly: return "neg_only";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "steered") return Variant::kSteered;
  if (name == "plain_cosine") return Variant::kPlainCosine;
  if (name == "safeclip_posneg") return Variant::kSafeClipPosNeg;
  if (name == "neg_only") return Variant::kNegOnly;
  throw ConfigError("unknown reward variant '" + name + "'");
}

void RewardSpec::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("reward alpha must be finite and >= 0");
  if (!(lambda_neg >= 0.0) || !std::isfinite(lambda_neg)) throw ConfigError("reward lambda_neg must be finite and >= 0");
}

double steered_cosine(const UnitEmbedding& z_image, const UnitEmbedding& z_text, const SafetyDirection& v,
                      double alpha) {
  if (embedspace::text_safety_score(z_text, v) < 0.0) {
    return z_image.dot(embedspace::steer(z_text, v, alpha));
  }
  return z_image.dot(z_text);
}

namespace {

double max_similarity(const UnitEmbedding& z, const std::vector<UnitEmbedding>& set) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : set) best = std::max(best, z.dot(a));
  return best;
}

std::vector<UnitEmbedding> encode_all(const SyntheticEncoder& enc, const std::vector<VectorXd>& points) {
  std::vector<UnitEmbedding> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(enc.encode(p));
  return out;
}

}  // namespace

double safeclip_cosine(const UnitEmbedding& z_image, const UnitEmbedding& z_text,
                       const std::vector<UnitEmbedding>& positives, const std::vector<UnitEmbedding>& negatives,
                       double lambda_neg) {
  double r = z_image.dot(z_text);
  if (!positives.empty()) {
    double bonus = 0.0;
    for (const auto& p : positives) bonus += z_image.dot(p);
    r += bonus / static_cast<double>(positives.size());
  }
  if (lambda_neg != 0.0) {
    if (negatives.empty()) throw ConfigError("safeclip_posneg with lambda_neg > 0 needs negative anchors");
    r -= lambda_neg * max_similarity(z_image, negatives);
  }
  return r;
}

double neg_only_cosine(const UnitEmbedding& z_image, const std::vector<UnitEmbedding>& negatives) {
  if (negatives.empty()) throw ConfigError("neg_only reward needs negative anchors");
  return -max_similarity(z_image, negatives);
}

double steered_reward(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc, const SafetyDirection& v,
                      double alpha) {
  return steered_cosine(enc.encode(x), enc.encode(prompt), v, alpha);
}

double plain_cosine(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc) {
  return enc.encode(x).dot(enc.encode(prompt));
}

double safeclip_posneg(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc,
                       const std::vector<VectorXd>& positives, const std::vector<VectorXd>& negatives,
                       double lambda_neg) {
  return safeclip_cosine(enc.encode(x), enc.encode(prompt), encode_all(enc, positives), encode_all(enc, negatives),
                         lambda_neg);
}

double neg_only(const VectorXd& x, const std::vector<VectorXd>& negatives, const SyntheticEncoder& enc) {
  return neg_only_cosine(enc.encode(x), encode_all(enc, negatives));
}

RewardModel::RewardModel(RewardSpec spec, SyntheticEncoder encoder, const embedspace::AnchorSet& anchors,
                         const std::vector<VectorXd>& prompt_points)
    : spec_(spec),
      encoder_(std::move(encoder)),
      direction_(embedspace::build_safety_direction(encoder_, anchors)),
      positives_(encode_all(encoder_, anchors.safe)),
      negatives_(encode_all(encoder_, anchors.unsafe)),
      prompts_(encode_all(encoder_, prompt_points)) {
  spec_.validate();
}

double RewardModel::operator()(const VectorXd& x, int prompt) const {
  const UnitEmbedding z_image = encoder_.encode(x);
  const UnitEmbedding& z_text = prompt_embedding(prompt);
  switch (spec_.variant) {
    case Variant::kSteered: return steered_cosine(z_image, z_text, direction_, spec_.alpha);
    case Variant::kPlainCosine: return z_image.dot(z_text);
    case Variant::kSafeClipPosNeg: return safeclip_cosine(z_image, z_text, positives_, negatives_, spec_.lambda_neg);
    case Variant::kNegOnly: return neg_only_cosine(z_image, negatives_);
  }
  return 0.0;
}

double RewardModel::alignment(const VectorXd& x, int prompt) const {
  return encoder_.encode(x).dot(prompt_embedding(prompt));
}

}  // namespace safesteer::reward
