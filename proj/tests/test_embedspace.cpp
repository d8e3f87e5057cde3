// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "safesteer/embedspace.hpp"

using namespace safesteer;
using namespace safesteer::embedspace;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SyntheticEncoder identity_encoder(Index d) { return SyntheticEncoder(MatrixXd::Identity(d, d), VectorXd::Zero(d)); }

UnitEmbedding random_unit(Index d, diffnum::Rng& rng) { return UnitEmbedding::normalized(diffnum::standard_normal(d, rng)); }

}  // namespace

TEST_CASE("unit embeddings validate their norm") {
  CHECK_NOTHROW(UnitEmbedding(vec({0.6, 0.8})));
  CHECK_THROWS_AS(UnitEmbedding(vec({0.6, 0.9})), DegenerateError);
  CHECK_THROWS_AS(UnitEmbedding(vec({1.0})), DimensionError);
  CHECK_THROWS_AS(UnitEmbedding::normalized(vec({0.0, 1e-13})), DegenerateError);
}

TEST_CASE("encode: identity map normalizes (3,4)") {
  const auto z = identity_encoder(2).encode(vec({3, 4}));
  CHECK(z.values()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(z.values()[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("encode: zero image is degenerate") {
  CHECK_THROWS_AS(identity_encoder(2).encode(vec({0, 0})), DegenerateError);
  CHECK_THROWS_AS(identity_encoder(2).encode(vec({1, 2, 3})), DimensionError);
}

TEST_CASE("encode: seeded encoder (seed 7) against matmul-then-normalize") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  const auto expect = oracle::encode(oracle::to_vec(Eigen::Map<const VectorXd>(enc.projection().data(), 16)),
                                     oracle::to_vec(enc.offset()), {1.0, 0.0});
  const auto z = enc.encode(vec({1, 0}));
  for (int i = 0; i < 8; ++i) CHECK(z.values()[i] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("seeded encoder geometry") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  const MatrixXd gram = enc.projection().transpose() * enc.projection();
  CHECK((gram - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((enc.projection().transpose() * enc.offset()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(enc.offset().norm() == doctest::Approx(3.0));
  CHECK(SyntheticEncoder::seeded(8, 2, 7, 3.0).projection() == enc.projection());
  CHECK_THROWS_AS(SyntheticEncoder::seeded(2, 2, 7, 1.0), ConfigError);
  CHECK_THROWS_AS(SyntheticEncoder(MatrixXd::Zero(4, 2), VectorXd::Zero(4)), DegenerateError);
}

TEST_CASE("property: encoded points are unit norm") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 3, 3.0);
  diffnum::Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const VectorXd x = 4.0 * diffnum::standard_normal(2, rng);
    CHECK(std::abs(enc.encode(x).values().norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("safety direction: symmetric pair") {
  const auto v = build_safety_direction(identity_encoder(2), AnchorSet{{vec({1, 0})}, {vec({-1, 0})}});
  CHECK(v.values()[0] == doctest::Approx(1.0));
  CHECK(v.values()[1] == doctest::Approx(0.0));
}

TEST_CASE("safety direction: swapping the lists negates it") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  const AnchorSet a{{vec({1, 0}), vec({0, 1})}, {vec({-1, 0.5})}};
  const AnchorSet b{a.unsafe, a.safe};
  CHECK(build_safety_direction(enc, a).values() == -build_safety_direction(enc, b).values());
}

TEST_CASE("safety direction: 3 safe + 2 unsafe against straight-line oracle") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  diffnum::Rng rng(42);
  AnchorSet anchors;
  for (int i = 0; i < 3; ++i) anchors.safe.push_back(diffnum::standard_normal(2, rng));
  for (int i = 0; i < 2; ++i) anchors.unsafe.push_back(diffnum::standard_normal(2, rng));

  const auto w = oracle::to_vec(Eigen::Map<const VectorXd>(enc.projection().data(), 16));
  const auto b = oracle::to_vec(enc.offset());
  oracle::Vec diff(8, 0.0);
  for (const auto& p : anchors.safe) {
    const auto z = oracle::encode(w, b, oracle::to_vec(p));
    for (std::size_t i = 0; i < 8; ++i) diff[i] += z[i] / 3.0;
  }
  for (const auto& p : anchors.unsafe) {
    const auto z = oracle::encode(w, b, oracle::to_vec(p));
    for (std::size_t i = 0; i < 8; ++i) diff[i] -= z[i] / 2.0;
  }
  const auto expect = oracle::normalize(diff);
  const auto v = build_safety_direction(enc, anchors);
  for (int i = 0; i < 8; ++i) CHECK(v.values()[i] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-13));
}

TEST_CASE("safety direction: duplicating anchors leaves it unchanged") {
  const auto enc = SyntheticEncoder::seeded(8, 2, 7, 3.0);
  const AnchorSet a{{vec({1, 0}), vec({0, 1})}, {vec({-1, 0.5}), vec({-0.3, -1})}};
  AnchorSet doubled = a;
  doubled.safe.insert(doubled.safe.end(), a.safe.begin(), a.safe.end());
  doubled.unsafe.insert(doubled.unsafe.end(), a.unsafe.begin(), a.unsafe.end());
  CHECK((build_safety_direction(enc, a).values() - build_safety_direction(enc, doubled).values()).norm() < 1e-14);
}

TEST_CASE("safety direction: indistinguishable or empty anchors") {
  const auto enc = identity_encoder(2);
  CHECK_THROWS_AS(build_safety_direction(enc, AnchorSet{{vec({1, 0})}, {vec({2, 0})}}), DegenerateError);
  CHECK_THROWS_AS(build_safety_direction(enc, AnchorSet{{}, {vec({2, 0})}}), ConfigError);
}

TEST_CASE("text safety score") {
  const SafetyDirection v(UnitEmbedding(vec({1, 0})));
  CHECK(text_safety_score(UnitEmbedding(vec({1, 0})), v) == 1.0);
  CHECK(text_safety_score(UnitEmbedding(vec({0, 1})), v) == 0.0);
  CHECK(text_safety_score(UnitEmbedding(vec({0.6, 0.8})), v) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("steer: hand examples") {
  const SafetyDirection v(UnitEmbedding(vec({1, 0})));
  const UnitEmbedding z(vec({0, 1}));
  CHECK(steer(z, v, 0.0).values() == z.values());

  const auto s = steer(z, v, 0.5);
  CHECK(s.values()[0] == doctest::Approx(0.5 / std::sqrt(1.25)).epsilon(1e-15));
  CHECK(s.values()[1] == doctest::Approx(1.0 / std::sqrt(1.25)).epsilon(1e-15));
  CHECK(s.values()[0] == doctest::Approx(0.4472).epsilon(1e-4));
  CHECK(s.values()[1] == doctest::Approx(0.8944).epsilon(1e-4));
  CHECK(text_safety_score(s, v) == doctest::Approx(0.4472).epsilon(1e-4));

  for (double a : {0.1, 1.0, 7.0}) CHECK((steer(v.direction(), v, a).values() - v.values()).norm() < 1e-15);
}

TEST_CASE("steer: errors") {
  const SafetyDirection v(UnitEmbedding(vec({1, 0})));
  CHECK_THROWS_AS(steer(UnitEmbedding(vec({-1, 0})), v, 1.0), DegenerateError);
  CHECK_THROWS_AS(steer(UnitEmbedding(vec({0, 1})), v, -0.1), ConfigError);
}

TEST_CASE("property: steered score is monotone in alpha") {
  diffnum::Rng rng(5);
  const SafetyDirection v(random_unit(8, rng));
  for (int n = 0; n < 200; ++n) {
    const auto z = random_unit(8, rng);
    double prev = text_safety_score(z, v);
    for (int k = 1; k <= 20; ++k) {
      const double s = text_safety_score(steer(z, v, 0.1 * k), v);
      CHECK(s > prev);
      prev = s;
    }
  }
}

TEST_CASE("property: steering preserves order for alpha < 1") {
  diffnum::Rng rng(6);
  const SafetyDirection v(random_unit(8, rng));
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    auto z1 = random_unit(8, rng);
    auto z2 = random_unit(8, rng);
    if (text_safety_score(z1, v) < text_safety_score(z2, v)) std::swap(z1, z2);
    const double a = alpha(rng);
    CHECK(text_safety_score(steer(z1, v, a), v) > text_safety_score(steer(z2, v, a), v));
  }
}
