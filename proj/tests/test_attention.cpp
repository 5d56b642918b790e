// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "abcnet/attention.hpp"

using namespace abcnet;
using namespace abcnet::attention;

namespace {

QKV random_qkv(Rng& rng, std::int64_t n, std::int64_t dk, std::int64_t dv) {
  return {random_uniform({n, dk}, rng), random_uniform({n, dk}, rng), random_uniform({n, dv}, rng)};
}

// Per-element softmax-weighted sum, no stabilization.
Tensor softmax_oracle(const QKV& a) {
  const std::int64_t n = a.tokens(), dk = a.key_dim(), dv = a.value_dim();
  Tensor out({n, dv});
  for (std::int64_t i = 0; i < n; ++i) {
    double z = 0;
    std::vector<double> s(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      double d = 0;
      for (std::int64_t c = 0; c < dk; ++c) d += a.q.at(i, c) * a.k.at(j, c);
      s[static_cast<std::size_t>(j)] = std::exp(d);
      z += s[static_cast<std::size_t>(j)];
    }
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t c = 0; c < dv; ++c) out.at(i, c) += s[static_cast<std::size_t>(j)] / z * a.v.at(j, c);
  }
  return out;
}

// Counts multiplies and divisions of a loop-level linear attention and the
// values it keeps alive.
struct Counted {
  std::int64_t ops = 0;
  std::int64_t live = 0;
};

Counted instrumented_linear(std::int64_t n, std::int64_t dk, std::int64_t dv) {
  Counted c;
  // Row normalization of Q and K: dk squares plus dk scalings per row.
  c.ops += 2 * (n * dk + n * dk);
  c.live += 2 * n * dk;
  // colsum(Kn), colsum(V): additions only.
  c.live += dk + dv;
  // Kn^T V.
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t a = 0; a < dk; ++a)
      for (std::int64_t b = 0; b < dv; ++b) ++c.ops;
  c.live += dk * dv;
  // Per query: numerator Qn (KV), denominator Qn . colsum(Kn), then dv divisions.
  for (std::int64_t i = 0; i < n; ++i) {
    c.ops += dk * dv;
    c.ops += dk;
    c.ops += dv;
  }
  c.live += n;  // one denominator per row
  return c;
}

Counted instrumented_dot(std::int64_t n, std::int64_t dk, std::int64_t dv) {
  Counted c;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) c.ops += dk;  // scores
  c.live += n * n;
  c.live += n;  // row sums
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) c.ops += dv;  // weights x V
  c.ops += n * dv;  // row normalization
  return c;
}

double rel(const Tensor& a, const Tensor& b) { return max_relative_error(a, b, 1e-8); }

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("projections") {
    Rng rng(1);
    const Tensor x = random_uniform({5, 3}, rng);
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
    const QKV id = project_qkv(x, {eye, eye, eye});
    CHECK(id.q == x);
    CHECK(id.k == x);
    CHECK(id.v == x);
    const QKV z = project_qkv(x, {eye, eye, Tensor::zeros({3, 2})});
    CHECK(z.v == Tensor::zeros({5, 2}));
    CHECK_THROWS_AS(project_qkv(x, {eye, Tensor({3, 2}), eye}), DimensionError);
  }

  TEST_CASE("dot-product attention") {
    Rng rng(2);
    const QKV one = random_qkv(rng, 1, 3, 2);
    CHECK(max_abs_diff(dot_product_attention(one), one.v) <= 1e-15);
    QKV constant = random_qkv(rng, 9, 4, 3);
    for (std::int64_t j = 0; j < 9; ++j)
      for (std::int64_t c = 0; c < 3; ++c) constant.v.at(j, c) = 0.25 * static_cast<double>(c) - 1;
    const Tensor co = dot_product_attention(constant);
    for (std::int64_t i = 0; i < 9; ++i)
      for (std::int64_t c = 0; c < 3; ++c) CHECK(co.at(i, c) == doctest::Approx(0.25 * c - 1).epsilon(1e-14));
    const QKV r = random_qkv(rng, 8, 4, 4);
    CHECK(max_abs_diff(dot_product_attention(r), softmax_oracle(r)) <= 1e-12);
    // Tiling over query rows must not change anything.
    const QKV big = random_qkv(rng, 150, 5, 3);
    CHECK(max_abs_diff(dot_product_attention(big), softmax_oracle(big)) <= 1e-12);
  }

  TEST_CASE("kernel attention selector and factorization") {
    // One-hot Q and K with identity maps select the matching value row.
    const std::int64_t n = 4;
    QKV a{Tensor({n, n}), Tensor({n, n}), Tensor({n, 2})};
    Rng rng(3);
    a.v = random_uniform({n, 2}, rng);
    for (std::int64_t i = 0; i < n; ++i) {
      a.q.at(i, (i + 1) % n) = 1;
      a.k.at(i, i) = 1;
    }
    const Tensor sel = kernel_attention_pairwise(a, {});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < 2; ++c) CHECK(sel.at(i, c) == doctest::Approx(a.v.at((i + 1) % n, c)));

    QKV pos = random_qkv(rng, 16, 4, 3);
    for (double& v : pos.q.data()) v = std::abs(v);
    for (double& v : pos.k.data()) v = std::abs(v);
    CHECK(rel(kernel_attention_factorized(pos, {}), kernel_attention_pairwise(pos, {})) <= 1e-10);
    const FeatureMapPair cos_maps{FeatureMap::l2_plus_one, FeatureMap::l2_plus_one};
    const QKV r = random_qkv(rng, 16, 4, 3);
    CHECK(rel(kernel_attention_factorized(r, cos_maps), kernel_attention_pairwise(r, cos_maps)) <= 1e-10);
    CHECK(rel(kernel_attention_pairwise(r, cos_maps), linear_attention_fast(r)) <= 1e-10);
    const QKV single = random_qkv(rng, 1, 3, 2);
    CHECK(max_abs_diff(kernel_attention_factorized(single, cos_maps), single.v) <= 1e-15);
  }

  TEST_CASE("feature maps") {
    const Tensor x = Tensor::from({2, 2}, {3, 4, 0, -2});
    const Tensor l = apply_feature_map(FeatureMap::l2_plus_one, x);
    CHECK(l.shape() == Shape{2, 3});
    CHECK(max_abs_diff(l, Tensor::from({2, 3}, {1, 0.6, 0.8, 1, 0, -1})) <= 1e-15);
    CHECK(apply_feature_map(FeatureMap::exponential, x).at(0, 1) == doctest::Approx(std::exp(4.0)));
    CHECK(apply_feature_map(FeatureMap::identity, x) == x);
    CHECK(feature_map_name(FeatureMap::l2_plus_one) == "l2_plus_one");
  }

  TEST_CASE("degenerate similarity is reported") {
    // Identity maps with q = -k give zero total similarity.
    QKV a{Tensor::from({2, 1}, {1, 1}), Tensor::from({2, 1}, {1, -1}), Tensor::from({2, 1}, {1, 2})};
    CHECK_THROWS_AS(kernel_attention_pairwise(a, {}), DegenerateError);
    CHECK_THROWS_AS(kernel_attention_factorized(a, {}), DegenerateError);
  }

  TEST_CASE("linear attention fast equals the pairwise form") {
    Rng rng(4);
    const QKV r = random_qkv(rng, 64, 8, 8);
    CHECK(rel(linear_attention_fast(r), linear_attention_pairwise(r)) <= 1e-10);
    const QKV one = random_qkv(rng, 1, 4, 3);
    CHECK(max_abs_diff(linear_attention_fast(one), one.v) <= 1e-15);
    CHECK(max_abs_diff(linear_attention_pairwise(one), one.v) <= 1e-15);
    // Independent evaluation of sum_j (1 + cos) v_j / sum_j (1 + cos).
    const QKV s = random_qkv(rng, 7, 3, 2);
    Tensor expect({7, 2});
    for (std::int64_t i = 0; i < 7; ++i) {
      double den = 0, nq = 0;
      for (std::int64_t c = 0; c < 3; ++c) nq += s.q.at(i, c) * s.q.at(i, c);
      for (std::int64_t j = 0; j < 7; ++j) {
        double nk = 0, d = 0;
        for (std::int64_t c = 0; c < 3; ++c) {
          nk += s.k.at(j, c) * s.k.at(j, c);
          d += s.q.at(i, c) * s.k.at(j, c);
        }
        const double w = 1 + d / std::sqrt(nq * nk);
        den += w;
        for (std::int64_t c = 0; c < 2; ++c) expect.at(i, c) += w * s.v.at(j, c);
      }
      for (std::int64_t c = 0; c < 2; ++c) expect.at(i, c) /= den;
    }
    CHECK(rel(linear_attention_fast(s), expect) <= 1e-10);
  }

  TEST_CASE("antipodal keys hit the denominator floor") {
    // N = 1 with q = -k: denominator 1 + (-1) = 0.
    QKV a{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {-1, 0}), Tensor::from({1, 1}, {5})};
    Diagnostics d;
    const Tensor out = linear_attention_fast(a, &d);
    CHECK(d.clamped_denominators == 1);
    CHECK(out.all_finite());
    Diagnostics p;
    linear_attention_pairwise(a, &p);
    CHECK(p.clamped_denominators == 1);
  }

  TEST_CASE("raw float kernels track the double tensors") {
    Rng rng(5);
    const std::int64_t n = 300, dk = 16, dv = 24;
    const QKV r = random_qkv(rng, n, dk, dv);
    std::vector<float> q(r.q.data().begin(), r.q.data().end()), k(r.k.data().begin(), r.k.data().end()),
        v(r.v.data().begin(), r.v.data().end()), out(static_cast<std::size_t>(n * dv));
    kernels::dot_product<float>(n, dk, dv, q.data(), k.data(), v.data(), out.data());
    const Tensor dp = dot_product_attention(r);
    for (std::int64_t i = 0; i < n * dv; ++i) CHECK(std::abs(out[static_cast<std::size_t>(i)] - dp[i]) < 1e-5);
    CHECK(kernels::linear<float>(n, dk, dv, q.data(), k.data(), v.data(), out.data()) == 0);
    const Tensor la = linear_attention_fast(r);
    for (std::int64_t i = 0; i < n * dv; ++i) CHECK(std::abs(out[static_cast<std::size_t>(i)] - la[i]) < 1e-5);
  }

  TEST_CASE("vector exp accuracy") {
    std::vector<float> x;
    for (double t = -87; t <= 88; t += 0.01) x.push_back(static_cast<float>(t));
    std::vector<float> y = x;
    kernels::exp_inplace(y.data(), static_cast<std::int64_t>(y.size()));
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::exp(static_cast<double>(x[i]));
      worst = std::max(worst, std::abs(y[i] - e) / e);
    }
    CHECK(worst < 2e-7);
  }

  TEST_CASE("count_cost matches the instrumented loops") {
    for (auto [n, dk, dv] : {std::array<std::int64_t, 3>{1, 1, 1}, {7, 3, 5}, {256, 32, 64}, {1000, 32, 64}}) {
      const CostReport d = count_cost(Kind::dot_product, n, dk, dv);
      const CostReport l = count_cost(Kind::linear, n, dk, dv);
      const Counted od = instrumented_dot(n, dk, dv), ol = instrumented_linear(n, dk, dv);
      CHECK(d.flops == od.ops);
      CHECK(d.peak_intermediate_values == od.live);
      CHECK(l.flops == ol.ops);
      CHECK(l.peak_intermediate_values == ol.live);
      CHECK(d.weight_array_values == n * n);
      CHECK(l.weight_array_values == 0);
    }
    CHECK(count_cost(Kind::dot_product, 1, 32, 64).weight_array_values == 1);
    // Frozen values at the benchmark setting D_v = 2 D_k = 64.
    CHECK(count_cost(Kind::dot_product, 65536, 32, 64).flops == 412316860416LL + 4194304LL);
    CHECK(count_cost(Kind::linear, 65536, 32, 64).flops == 283115520LL);
    CHECK_THROWS_AS(count_cost(Kind::linear, 0, 1, 1), ContractError);
  }

  TEST_CASE("cost scaling") {
    const auto d1 = count_cost(Kind::dot_product, 512, 32, 64), d2 = count_cost(Kind::dot_product, 1024, 32, 64);
    const auto l1 = count_cost(Kind::linear, 512, 32, 64), l2 = count_cost(Kind::linear, 1024, 32, 64);
    CHECK(d2.weight_array_values == 4 * d1.weight_array_values);
    CHECK(l2.peak_intermediate_values - (32 * 64 + 32 + 64) ==
          2 * (l1.peak_intermediate_values - (32 * 64 + 32 + 64)));
    const double r256 = static_cast<double>(count_cost(Kind::dot_product, 256, 32, 64).flops) /
                        static_cast<double>(count_cost(Kind::linear, 256, 32, 64).flops);
    const double r64k = static_cast<double>(count_cost(Kind::dot_product, 65536, 32, 64).flops) /
                        static_cast<double>(count_cost(Kind::linear, 65536, 32, 64).flops);
    CHECK(r64k > 100 * r256);
  }

  TEST_CASE("graph linear attention matches the tensor form") {
    Rng rng(6);
    const QKV r = random_qkv(rng, 20, 4, 5);
    Graph g(false);
    std::int64_t clamps = 0;
    const Var out = linear_attention(g.constant(r.q), g.constant(r.k), g.constant(r.v), &clamps);
    CHECK(clamps == 0);
    CHECK(rel(out.value(), linear_attention_fast(r)) <= 1e-12);
    const Var dp = dot_product_attention(g.constant(r.q), g.constant(r.k), g.constant(r.v));
    CHECK(rel(dp.value(), dot_product_attention(r)) <= 1e-12);
  }
}
