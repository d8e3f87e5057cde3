// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "safesteer/reward.hpp"

using namespace safesteer;
using namespace safesteer::reward;
using embedspace::AnchorSet;
using embedspace::MatrixXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

UnitEmbedding unit(std::initializer_list<double> v) { return UnitEmbedding::normalized(vec(v)); }

SyntheticEncoder identity_encoder() { return SyntheticEncoder(MatrixXd::Identity(2, 2), VectorXd::Zero(2)); }

struct Fixture {
  SyntheticEncoder enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  AnchorSet anchors{{vec({-1, 0}), vec({-0.5, 0.87})}, {vec({1.6, 0.9}), vec({1.6, -0.9})}};
  SafetyDirection v = embedspace::build_safety_direction(enc, anchors);
};

oracle::Vec encode(const SyntheticEncoder& enc, const VectorXd& x) {
  return oracle::encode(oracle::to_vec(Eigen::Map<const VectorXd>(enc.projection().data(), enc.projection().size())),
                        oracle::to_vec(enc.offset()), oracle::to_vec(x));
}

}  // namespace

TEST_CASE("variant names round-trip") {
  for (auto v : {Variant::kSteered, Variant::kPlainCosine, Variant::kSafeClipPosNeg, Variant::kNegOnly}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("clip"), ConfigError);
  RewardSpec bad;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.alpha = 0.5;
  bad.lambda_neg = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("steered: collinear hand case flips the target") {
  const SafetyDirection v(unit({0, 1}));
  const auto z_text = unit({0, -1});
  const auto z_image = unit({0, 1});
  CHECK(steered_cosine(z_image, z_text, v, 0.5) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(steered_cosine(z_image, z_text, v, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("steered: safe prompts and alpha = 0 reduce to plain cosine") {
  Fixture f;
  diffnum::Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const VectorXd x = 1.5 * diffnum::standard_normal(2, rng);
    const VectorXd prompt = 1.5 * diffnum::standard_normal(2, rng);
    const double plain = plain_cosine(x, prompt, f.enc);
    CHECK(steered_reward(x, prompt, f.enc, f.v, 0.0) == plain);
    if (embedspace::text_safety_score(f.enc.encode(prompt), f.v) >= 0.0) {
      for (double a : {0.25, 0.5, 2.0}) CHECK(steered_reward(x, prompt, f.enc, f.v, a) == plain);
    }
    CHECK(std::abs(steered_reward(x, prompt, f.enc, f.v, 0.5)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("steered: zero safety score takes the unsteered branch") {
  const SafetyDirection v(unit({1, 0}));
  const auto z_text = unit({0, 1});
  const auto z_image = unit({0.6, 0.8});
  CHECK(steered_cosine(z_image, z_text, v, 1.0) == z_image.dot(z_text));
}

TEST_CASE("steered: aligned image gains reward as alpha grows") {
  Fixture f;
  diffnum::Rng rng(3);
  const UnitEmbedding z_image = f.v.direction();
  int unsafe_seen = 0;
  for (int i = 0; i < 200; ++i) {
    const auto z_text = UnitEmbedding::normalized(diffnum::standard_normal(8, rng));
    if (embedspace::text_safety_score(z_text, f.v) >= 0.0) continue;
    ++unsafe_seen;
    double prev = steered_cosine(z_image, z_text, f.v, 0.0);
    for (int k = 1; k <= 20; ++k) {
      const double r = steered_cosine(z_image, z_text, f.v, 0.1 * k);
      CHECK(r >= prev);
      prev = r;
    }
  }
  CHECK(unsafe_seen > 50);
}

TEST_CASE("plain cosine") {
  const auto enc = identity_encoder();
  CHECK(plain_cosine(vec({2, 0}), vec({5, 0}), enc) == 1.0);
  CHECK(plain_cosine(vec({2, 0}), vec({0, 3}), enc) == 0.0);
  Fixture f;
  const VectorXd x = vec({0.3, -1.2}), p = vec({-0.4, 0.7});
  CHECK(plain_cosine(x, p, f.enc) == doctest::Approx(oracle::dot(encode(f.enc, x), encode(f.enc, p))).epsilon(1e-14));
}

TEST_CASE("safeclip_posneg") {
  const auto enc = identity_encoder();
  const VectorXd x = vec({1, 1}), p = vec({1, 0});
  CHECK(safeclip_posneg(x, p, enc, {}, {vec({0, 1})}, 0.0) == plain_cosine(x, p, enc));
  CHECK(safeclip_posneg(x, p, enc, {}, {}, 0.0) == plain_cosine(x, p, enc));
  // Image equal to a negative anchor: the penalty is exactly lambda * 1.
  const double r = safeclip_posneg(vec({0, 2}), p, enc, {}, {vec({0, 1}), vec({1, 0})}, 1.0);
  CHECK(r == doctest::Approx(plain_cosine(vec({0, 2}), p, enc) - 1.0).epsilon(1e-15));
  CHECK_THROWS_AS(safeclip_posneg(x, p, enc, {}, {}, 1.0), ConfigError);

  Fixture f;
  const VectorXd xi = vec({-0.2, 0.5}), pi = vec({-1, 0.1});
  const auto zi = encode(f.enc, xi);
  double pos = 0.0;
  for (const auto& a : f.anchors.safe) pos += oracle::dot(zi, encode(f.enc, a)) / 2.0;
  double neg = -1.0;
  for (const auto& a : f.anchors.unsafe) neg = std::max(neg, oracle::dot(zi, encode(f.enc, a)));
  const double expect = oracle::dot(zi, encode(f.enc, pi)) + pos - 0.7 * neg;
  CHECK(safeclip_posneg(xi, pi, f.enc, f.anchors.safe, f.anchors.unsafe, 0.7) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("neg_only") {
  const auto enc = identity_encoder();
  CHECK(neg_only(vec({0, 3}), {vec({0, 1}), vec({1, 1})}, enc) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(neg_only(vec({0, 3}), {vec({1, 0}), vec({-2, 0})}, enc) == 0.0);
  CHECK_THROWS_AS(neg_only(vec({0, 3}), {}, enc), ConfigError);

  Fixture f;
  const VectorXd x = vec({0.9, 0.1});
  double best = -1.0;
  for (const auto& a : f.anchors.unsafe) best = std::max(best, oracle::dot(encode(f.enc, x), encode(f.enc, a)));
  CHECK(neg_only(x, f.anchors.unsafe, f.enc) == doctest::Approx(-best).epsilon(1e-14));
}

TEST_CASE("reward model dispatches on the variant") {
  Fixture f;
  const std::vector<VectorXd> prompts{vec({-1, 0}), vec({1, 0})};
  const VectorXd x = vec({0.2, 0.4});
  for (auto variant : {Variant::kSteered, Variant::kPlainCosine, Variant::kSafeClipPosNeg, Variant::kNegOnly}) {
    RewardSpec spec;
    spec.variant = variant;
    const RewardModel model(spec, f.enc, f.anchors, prompts);
    CHECK(model.alignment(x, 1) == plain_cosine(x, prompts[1], f.enc));
    for (int p = 0; p < 2; ++p) {
      const auto& prompt = prompts[static_cast<std::size_t>(p)];
      double expect = 0.0;
      switch (variant) {
        case Variant::kSteered: expect = steered_reward(x, prompt, f.enc, f.v, spec.alpha); break;
        case Variant::kPlainCosine: expect = plain_cosine(x, prompt, f.enc); break;
        case Variant::kSafeClipPosNeg:
          expect = safeclip_posneg(x, prompt, f.enc, f.anchors.safe, f.anchors.unsafe, spec.lambda_neg);
          break;
        case Variant::kNegOnly: expect = neg_only(x, f.anchors.unsafe, f.enc); break;
      }
      CAPTURE(to_string(variant));
      CHECK(model(x, p) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("reward model never alters the prompt embedding it was given") {
  Fixture f;
  const std::vector<VectorXd> prompts{vec({1, 0})};
  const RewardModel model(RewardSpec{}, f.enc, f.anchors, prompts);
  CHECK(embedspace::text_safety_score(model.prompt_embedding(0), model.direction()) < 0.0);
  CHECK(model.prompt_embedding(0).values() == f.enc.encode(prompts[0]).values());
}
