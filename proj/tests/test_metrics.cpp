// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "abcnet/metrics.hpp"

using namespace abcnet;
using namespace abcnet::metrics;

namespace {

struct PixelOracle {
  double oa = 0;
  double miou = 0;
  double mean_f1 = 0;
  double kappa = 0;
};

// Recomputes the metrics straight from the pixel lists.
PixelOracle pixel_oracle(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& ref, int k) {
  double n = 0, agree = 0;
  std::vector<double> tp(k), fp(k), fn(k), rc(k), pc(k);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == kIgnoreLabel || ref[i] == kIgnoreLabel) continue;
    n += 1;
    rc[ref[i]] += 1;
    pc[pred[i]] += 1;
    if (pred[i] == ref[i]) {
      agree += 1;
      tp[ref[i]] += 1;
    } else {
      fp[pred[i]] += 1;
      fn[ref[i]] += 1;
    }
  }
  PixelOracle o;
  o.oa = agree / n;
  int present = 0;
  double pe = 0;
  for (int c = 0; c < k; ++c) {
    pe += rc[c] * pc[c] / (n * n);
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    ++present;
    o.miou += tp[c] / (tp[c] + fp[c] + fn[c]);
    const double p = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0;
    const double r = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0;
    o.mean_f1 += p + r > 0 ? 2 * p * r / (p + r) : 0;
  }
  o.miou /= present;
  o.mean_f1 /= present;
  o.kappa = (o.oa - pe) / (1 - pe);
  return o;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("hand-computed two-class matrix") {
    const auto cm = ConfusionMatrix::from_counts(2, {3, 1, 1, 5});
    CHECK(overall_accuracy(cm) == doctest::Approx(0.8));
    CHECK(miou(cm) == doctest::Approx((3.0 / 5 + 5.0 / 7) / 2).epsilon(1e-14));
    const F1Scores f = f1_scores(cm);
    CHECK(f.per_class[0] == doctest::Approx(0.75));
    CHECK(f.per_class[1] == doctest::Approx(10.0 / 12));
    CHECK(f.mean == doctest::Approx((0.75 + 10.0 / 12) / 2));
  }

  TEST_CASE("kappa and its variance") {
    // n = 50, p_o = 0.7, p_e = 0.5, t3 = 0.71, t4 = 1.01.
    const KappaResult r = kappa(ConfusionMatrix::from_counts(2, {20, 5, 10, 15}));
    CHECK(r.kappa == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(r.variance == doctest::Approx(0.016128).epsilon(1e-12));
    const KappaResult perfect = kappa(ConfusionMatrix::from_counts(2, {10, 0, 0, 10}));
    CHECK(perfect.kappa == doctest::Approx(1.0));
    CHECK(perfect.variance == doctest::Approx(0.0));
  }

  TEST_CASE("z-test") {
    const ZTest t = kappa_z_test({0.9, 0.0004}, {0.8, 0.0005});
    CHECK(t.z == doctest::Approx(0.1 / std::sqrt(0.0009)).epsilon(1e-12));
    CHECK(t.z == doctest::Approx(3.3333).epsilon(1e-4));
    CHECK(t.significant);
    const ZTest back = kappa_z_test({0.8, 0.0005}, {0.9, 0.0004});
    CHECK(back.z == doctest::Approx(-t.z));
    CHECK(back.significant);
    const ZTest close = kappa_z_test({0.81, 0.0004}, {0.80, 0.0005});
    CHECK_FALSE(close.significant);
    CHECK(kappa_z_test({0.5, 0}, {0.5, 0}).z == 0.0);
    CHECK_THROWS_AS(kappa_z_test({0.6, 0}, {0.5, 0}), DegenerateError);
    CHECK_THROWS_AS(kappa_z_test({0.6, -1}, {0.5, 0}), ContractError);
  }

  TEST_CASE("undefined cases") {
    const ConfusionMatrix empty(3);
    CHECK_THROWS_AS(overall_accuracy(empty), UndefinedMetricError);
    CHECK_THROWS_AS(kappa(empty), UndefinedMetricError);
    // Everything in one cell: chance agreement is 1.
    CHECK_THROWS_AS(kappa(ConfusionMatrix::from_counts(2, {7, 0, 0, 0})), UndefinedMetricError);
    const auto one = ConfusionMatrix::from_counts(3, {4, 0, 0, 0, 0, 0, 0, 0, 0});
    CHECK(std::isnan(iou_per_class(one)[1]));
    CHECK(miou(one) == 1.0);
    // Present only as a wrong prediction: F1 is 0, not NaN.
    const auto miss = ConfusionMatrix::from_counts(2, {0, 3, 0, 0});
    CHECK(f1_scores(miss).per_class[0] == 0.0);
    CHECK_THROWS_AS(ConfusionMatrix::from_counts(2, {1, 2, 3}), DimensionError);
  }

  TEST_CASE("accumulate against the pixel oracle") {
    Rng rng(1);
    for (int trial = 0; trial < 25; ++trial) {
      const int k = 2 + trial % 5;
      std::vector<std::uint8_t> p(300), r(300);
      for (std::size_t i = 0; i < p.size(); ++i) {
        r[i] = static_cast<std::uint8_t>(rng.uniform() * k);
        p[i] = rng.uniform() < 0.7 ? r[i] : static_cast<std::uint8_t>(rng.uniform() * k);
        if (rng.uniform() < 0.05) r[i] = kIgnoreLabel;
      }
      ConfusionMatrix cm(k);
      cm.accumulate(p, r);
      const PixelOracle o = pixel_oracle(p, r, k);
      CHECK(overall_accuracy(cm) == doctest::Approx(o.oa).epsilon(1e-12));
      CHECK(miou(cm) == doctest::Approx(o.miou).epsilon(1e-12));
      CHECK(f1_scores(cm).mean == doctest::Approx(o.mean_f1).epsilon(1e-12));
      CHECK(kappa(cm).kappa == doctest::Approx(o.kappa).epsilon(1e-12));
    }
  }

  TEST_CASE("accumulation order does not matter") {
    Rng rng(2);
    std::vector<std::uint8_t> a(100), b(100), c(100), d(100);
    for (std::size_t i = 0; i < 100; ++i) {
      a[i] = static_cast<std::uint8_t>(rng.uniform() * 4);
      b[i] = static_cast<std::uint8_t>(rng.uniform() * 4);
      c[i] = static_cast<std::uint8_t>(rng.uniform() * 4);
      d[i] = static_cast<std::uint8_t>(rng.uniform() * 4);
    }
    ConfusionMatrix x(4), y(4), s(4), t(4);
    x.accumulate(a, b);
    x.accumulate(c, d);
    y.accumulate(c, d);
    y.accumulate(a, b);
    CHECK(x == y);
    s.accumulate(a, b);
    t.accumulate(c, d);
    s += t;
    CHECK(s == x);
    CHECK(x.total() == 200);
  }

  TEST_CASE("accumulate input errors") {
    ConfusionMatrix cm(3);
    const std::vector<std::uint8_t> p{0, 1}, r{0, 1, 2}, bad{0, 5};
    CHECK_THROWS_AS(cm.accumulate(p, r), ShapeError);
    CHECK_THROWS_AS(cm.accumulate(bad, p), LabelError);
    ConfusionMatrix other(4);
    CHECK_THROWS_AS(cm += other, DimensionError);
  }

  TEST_CASE("pairwise z matrix") {
    const ZMatrix m = pairwise_z_matrix({{"a", {0.8, 0.0005}}, {"b", {0.9, 0.0004}}, {"c", {0.85, 0.0001}}});
    CHECK(m.names.size() == 3);
    CHECK(m.z[0][1] == doctest::Approx(0.1 / std::sqrt(0.0009)));
    CHECK(m.z[1][2] == doctest::Approx(-0.05 / std::sqrt(0.0005)));
    CHECK(m.to_csv().find("a") != std::string::npos);
    CHECK_THROWS_AS(pairwise_z_matrix({{"a", {0.8, 0.0005}}}), ContractError);
  }

  TEST_CASE("report lists every class and a summary") {
    const auto cm = ConfusionMatrix::from_counts(2, {3, 1, 1, 5});
    const std::string csv = report_csv(cm, {"road", "roof"});
    CHECK(csv.find("road") != std::string::npos);
    CHECK(csv.find("roof") != std::string::npos);
    CHECK(csv.find("0.8") != std::string::npos);
    CHECK(report_text(cm).size() > 0);
  }
}
