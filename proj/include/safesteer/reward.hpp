// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "safesteer/embedspace.hpp"

namespace safesteer::reward {

using embedspace::SafetyDirection;
using embedspace::SyntheticEncoder;
using embedspace::UnitEmbedding;
using embedspace::VectorXd;

enum class Variant { kSteered, kPlainCosine, kSafeClipPosNeg, kNegOnly };

std::string to_string(Variant v);
// Accepts "steered", "plain_cosine", "safeclip_posneg", "neg_only".
Variant parse_variant(const std::string& name);

struct RewardSpec {
  Variant variant = Variant::kSteered;
  double alpha = 0.5;       // steered only
  double lambda_neg = 1.0;  // safeclip_posneg only

  void validate() const;
  bool operator==(const RewardSpec&) const = default;
};

// Embedding-level forms. These are what the point-level wrappers reduce to.
double steered_cosine(const UnitEmbedding& z_image, const UnitEmbedding& z_text, const SafetyDirection& v, double alpha);
double safeclip_cosine(const UnitEmbedding& z_image, const UnitEmbedding& z_text,
                       const std::vector<UnitEmbedding>& positives, const std::vector<UnitEmbedding>& negatives,
                       double lambda_neg);
double neg_only_cosine(const UnitEmbedding& z_image, const std::vector<UnitEmbedding>& negatives);

// Point-level forms; `prompt` is the prompt-space point identifying the prompt.
double steered_reward(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc, const SafetyDirection& v,
                      double alpha);
double plain_cosine(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc);
double safeclip_posneg(const VectorXd& x, const VectorXd& prompt, const SyntheticEncoder& enc,
                       const std::vector<VectorXd>& positives, const std::vector<VectorXd>& negatives,
                       double lambda_neg);
double neg_only(const VectorXd& x, const std::vector<VectorXd>& negatives, const SyntheticEncoder& enc);

// Binds a RewardSpec to an encoder, a safety direction and anchor embeddings,
// with prompt embeddings cached. Rewards read only the terminal sample; the
// steered target never feeds back into the sampler's conditioning.
class RewardModel {
 public:
  RewardModel(RewardSpec spec, SyntheticEncoder encoder, const embedspace::AnchorSet& anchors,
              const std::vector<VectorXd>& prompt_points);

  double operator()(const VectorXd& x, int prompt) const;
  // z_I . z_T regardless of variant; the utility metric.
  double alignment(const VectorXd& x, int prompt) const;

  const RewardSpec& spec() const { return spec_; }
  const SyntheticEncoder& encoder() const { return encoder_; }
  const SafetyDirection& direction() const { return direction_; }
  const UnitEmbedding& prompt_embedding(int prompt) const { return prompts_.at(static_cast<std::size_t>(prompt)); }

 private:
  RewardSpec spec_;
  SyntheticEncoder encoder_;
  SafetyDirection direction_;
  std::vector<UnitEmbedding> positives_;
  std::vector<UnitEmbedding> negatives_;
  std::vector<UnitEmbedding> prompts_;
};

}  // namespace safesteer::reward
