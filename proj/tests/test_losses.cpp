// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "abcnet/losses.hpp"
#include "abcnet/ops.hpp"

using namespace abcnet;
using namespace abcnet::losses;
namespace ag = abcnet::autograd;

namespace {

Labels make_labels(std::int64_t b, std::int64_t h, std::int64_t w, std::vector<std::uint8_t> v) {
  return {b, h, w, std::move(v)};
}

Labels random_labels(Rng& rng, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t k) {
  Labels y{b, h, w, {}};
  for (std::int64_t i = 0; i < b * h * w; ++i) {
    const double u = rng.uniform();
    y.values.push_back(u < 0.1 ? kIgnoreLabel : static_cast<std::uint8_t>(static_cast<std::int64_t>(u * 1000) % k));
  }
  return y;
}

// Plain loop over pixels and classes.
double focal_oracle(const Tensor& p, const Labels& y, double gamma) {
  const std::int64_t k = p.dim(1), hw = y.height * y.width;
  double total = 0;
  std::int64_t valid = 0;
  for (std::int64_t b = 0; b < y.batch; ++b)
    for (std::int64_t i = 0; i < hw; ++i) {
      const auto lab = y.values[static_cast<std::size_t>(b * hw + i)];
      if (lab == kIgnoreLabel) continue;
      ++valid;
      for (std::int64_t c = 0; c < k; ++c) {
        const double q = p.at(b, c, i / y.width, i % y.width);
        total += c == lab ? -std::pow(1 - q, gamma) * std::log(q) : -std::pow(q, gamma) * std::log(1 - q);
      }
    }
  return total / static_cast<double>(valid * k);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("uniform binary probabilities") {
    const Tensor p({1, 2, 2, 2}, 0.5);
    const Labels y = make_labels(1, 2, 2, {0, 1, 1, 0});
    CHECK(cross_entropy(p, y) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(focal_loss(p, y, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-14));
    CHECK(focal_loss(p, y, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  TEST_CASE("matches the loop oracle") {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor p = ops::softmax_channels(random_uniform({2, 5, 3, 4}, rng, -3, 3));
      const Labels y = random_labels(rng, 2, 3, 4, 5);
      CHECK(cross_entropy(p, y) == doctest::Approx(focal_oracle(p, y, 0)).epsilon(1e-12));
      CHECK(focal_loss(p, y, 2) == doctest::Approx(focal_oracle(p, y, 2)).epsilon(1e-12));
      CHECK(focal_loss(p, y, 0.5) == doctest::Approx(focal_oracle(p, y, 0.5)).epsilon(1e-12));
      CHECK(std::abs(focal_loss(p, y, 0) - cross_entropy(p, y)) <= 1e-12);
    }
  }

  TEST_CASE("focal weighting never exceeds cross-entropy") {
    Rng rng(2);
    const Tensor p = ops::softmax_channels(random_uniform({1, 4, 4, 4}, rng, -2, 2));
    const Labels y = random_labels(rng, 1, 4, 4, 4);
    CHECK(focal_loss(p, y, 2) <= cross_entropy(p, y));
    CHECK(focal_loss(p, y, 4) <= focal_loss(p, y, 2));
  }

  TEST_CASE("ignored pixels contribute nothing") {
    const Tensor p = Tensor::from({1, 2, 1, 2}, {0.9, 0.3, 0.1, 0.7});
    const double only_first = cross_entropy(Tensor::from({1, 2, 1, 1}, {0.9, 0.1}), make_labels(1, 1, 1, {0}));
    CHECK(cross_entropy(p, make_labels(1, 1, 2, {0, kIgnoreLabel})) == doctest::Approx(only_first).epsilon(1e-15));
  }

  TEST_CASE("saturated probabilities stay finite") {
    const Tensor p = Tensor::from({1, 2, 1, 1}, {1.0, 0.0});
    const double wrong = cross_entropy(p, make_labels(1, 1, 1, {1}));
    CHECK(std::isfinite(wrong));
    CHECK(wrong == doctest::Approx(-std::log(kProbEpsilon)).epsilon(1e-6));
  }

  TEST_CASE("label and shape errors") {
    const Tensor p({1, 3, 2, 2}, 1.0 / 3);
    CHECK_THROWS_AS(cross_entropy(p, make_labels(1, 2, 2, {0, 1, 3, 2})), LabelError);
    CHECK_THROWS_AS(cross_entropy(p, make_labels(1, 2, 1, {0, 1})), ShapeError);
    CHECK_THROWS_AS(cross_entropy(p, make_labels(1, 2, 2, {0, 1})), ShapeError);
    CHECK_THROWS_AS(focal_loss(p, make_labels(1, 2, 2, {0, 1, 1, 2}), -1), ContractError);
  }

  TEST_CASE("graph losses agree with the tensor forms") {
    Rng rng(3);
    const Tensor l = random_uniform({1, 3, 4, 4}, rng, -2, 2);
    const Labels y = random_labels(rng, 1, 4, 4, 3);
    Graph g;
    const Var probs = ag::softmax_channels(g.leaf(l));
    CHECK(cross_entropy(probs, y).value()[0] == doctest::Approx(cross_entropy(probs.value(), y)).epsilon(1e-14));
    CHECK(focal_loss(probs, y, 2).value()[0] == doctest::Approx(focal_loss(probs.value(), y, 2)).epsilon(1e-14));
  }

  TEST_CASE("total loss adds the three terms") {
    Rng rng(4);
    const Tensor a = random_uniform({2, 4, 4, 4}, rng, -2, 2), b = random_uniform({2, 4, 4, 4}, rng, -2, 2),
                 c = random_uniform({2, 4, 4, 4}, rng, -2, 2);
    const Labels y = random_labels(rng, 2, 4, 4, 4);
    Graph g;
    const double total = total_loss(g.leaf(a), g.leaf(b), g.leaf(c), y).value()[0];
    const double expect = cross_entropy(ops::softmax_channels(a), y) + focal_loss(ops::softmax_channels(b), y, 2) +
                          focal_loss(ops::softmax_channels(c), y, 2);
    CHECK(total == doctest::Approx(expect).epsilon(1e-13));
    // With gamma 0 and identical logits every term is the same cross-entropy.
    const double same = total_loss(g.leaf(a), g.leaf(a), g.leaf(a), y, {0.0}).value()[0];
    CHECK(same == doctest::Approx(3 * cross_entropy(ops::softmax_channels(a), y)).epsilon(1e-13));
  }
}
