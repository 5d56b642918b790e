// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "abcnet/autograd.hpp"
#include "abcnet/gradcheck.hpp"
#include "abcnet/gradcheck_suite.hpp"
#include "abcnet/optim.hpp"

using namespace abcnet;
namespace ag = abcnet::autograd;

TEST_SUITE("autograd") {
  TEST_CASE("gradient of sum is ones") {
    Graph g;
    Rng rng(1);
    const Var x = g.leaf(random_uniform({3, 4}, rng));
    g.backward(ag::sum(x));
    const Tensor gx = g.grad(x);
    for (double v : gx.data()) CHECK(v == 1.0);
  }

  TEST_CASE("gradient of half squared norm is x") {
    Graph g;
    Rng rng(2);
    const Tensor xv = random_uniform({5}, rng);
    const Var x = g.leaf(xv);
    g.backward(ag::scale(ag::sum(ag::mul(x, x)), 0.5));
    CHECK(max_abs_diff(g.grad(x), xv) <= 1e-15);
  }

  TEST_CASE("matmul gradients follow the closed form") {
    Graph g;
    Rng rng(3);
    const Tensor av = random_uniform({2, 3}, rng), bv = random_uniform({3, 4}, rng);
    const Var a = g.leaf(av), b = g.leaf(bv);
    g.backward(ag::sum(ag::matmul(a, b)));
    // d/dA sum(AB) = 1 B^T; d/dB = A^T 1.
    for (std::int64_t i = 0; i < 2; ++i)
      for (std::int64_t k = 0; k < 3; ++k) {
        double s = 0;
        for (std::int64_t j = 0; j < 4; ++j) s += bv.at(k, j);
        CHECK(g.grad(a).at(i, k) == doctest::Approx(s).epsilon(1e-14));
      }
    for (std::int64_t k = 0; k < 3; ++k)
      CHECK(g.grad(b).at(k, 2) == doctest::Approx(av.at(0, k) + av.at(1, k)).epsilon(1e-14));
  }

  TEST_CASE("fan-out accumulates and unreached leaves get zeros") {
    Graph g;
    const Var x = g.leaf(Tensor::from({2}, {1.5, -2.0}));
    const Var unused = g.leaf(Tensor::from({3}, {1, 2, 3}));
    g.backward(ag::sum(ag::add(ag::scale(x, 3.0), x)));
    CHECK(g.grad(x) == Tensor::from({2}, {4.0, 4.0}));
    CHECK(g.grad(unused) == Tensor::zeros({3}));
  }

  TEST_CASE("constants accumulate no gradient; no-grad graphs store no closures") {
    Graph g;
    const Var c = g.constant(Tensor::from({2}, {1, 2}));
    const Var x = g.leaf(Tensor::from({2}, {3, 4}));
    CHECK_FALSE(g.requires_grad(c));
    CHECK(g.requires_grad(ag::mul(c, x)));
    Graph off(false);
    const Var y = off.leaf(Tensor::from({2}, {3, 4}));
    CHECK_FALSE(off.requires_grad(ag::mul(y, y)));
  }

  TEST_CASE("non-scalar loss is a contract error") {
    Graph g;
    const Var x = g.leaf(Tensor({2, 2}, 1.0));
    CHECK_THROWS_AS(g.backward(x), ContractError);
  }

  TEST_CASE("memory budget raises a resource error") {
    Graph g;
    g.set_memory_budget(1000);
    g.leaf(Tensor({10}, 1.0));
    CHECK_THROWS_AS(g.leaf(Tensor({200}, 1.0)), ResourceError);
  }

  TEST_CASE("parameters alias external storage") {
    Tensor w = Tensor::from({2}, {1, 2});
    Graph g;
    const Var p = g.parameter("w", w);
    g.backward(ag::sum(ag::mul(p, p)));
    const auto pg = g.parameter_grads();
    REQUIRE(pg.size() == 1);
    CHECK(pg[0].name == "w");
    CHECK(pg[0].grad == Tensor::from({2}, {2, 4}));
    w[0] = 10;
    CHECK(p.value()[0] == 10);
  }

  TEST_CASE("clamp_min counts clamped entries") {
    Graph g;
    std::int64_t count = 0;
    const Var y = ag::clamp_min(g.leaf(Tensor::from({4}, {-1, 0.5, 2, 0.01})), 0.1, &count);
    CHECK(count == 2);
    CHECK(y.value() == Tensor::from({4}, {0.1, 0.5, 2, 0.1}));
  }
}

TEST_SUITE("gradcheck") {
  TEST_CASE("linear function has vanishing error") {
    Rng rng(4);
    const Tensor w = random_uniform({6}, rng);
    const GradCheckResult r = grad_check(
        [&](Graph& g, std::span<const Var> v) { return ag::sum(ag::mul(v[0], g.constant(w))); },
        {random_uniform({6}, rng)});
    CHECK(r.coords == 6);
    CHECK(r.max_rel_error < 1e-9);
  }

  TEST_CASE("quadratic at the origin has zero gradient") {
    const auto f = [](const Tensor& x) {
      double s = 0;
      for (double v : x.data()) s += v * v;
      return s;
    };
    const Tensor g = numerical_gradient(f, Tensor::zeros({4}));
    for (double v : g.data()) CHECK(std::abs(v) < 1e-12);
    CHECK(grad_check(f, Tensor::zeros({4}), Tensor::zeros({4})).passed());
  }

  TEST_CASE("a wrong analytic gradient is caught") {
    const auto f = [](const Tensor& x) { return x[0] * x[0] * x[0]; };
    const Tensor x = Tensor::from({1}, {1.3});
    CHECK_FALSE(grad_check(f, Tensor::from({1}, {3.0}), x).passed());
    CHECK(grad_check(f, Tensor::from({1}, {3 * 1.3 * 1.3}), x).passed());
  }

  TEST_CASE("coordinate sampling respects the cap") {
    Rng rng(5);
    GradCheckOptions o;
    o.max_coords = 40;
    const GradCheckResult r = grad_check(
        [](Graph&, std::span<const Var> v) { return ag::sum(ag::mul(v[0], v[1])); },
        {random_uniform({100}, rng), random_uniform({100}, rng)}, o);
    CHECK(r.coords == 40);
    CHECK(r.passed());
  }

  TEST_CASE("registry lists every differentiable op exactly once") {
    const std::vector<std::string> ops{
        "matmul", "transpose", "conv2d", "batchnorm2d", "relu", "softmax_rows", "l2_normalize_rows",
        "bilinear_resize", "bilinear_upsample", "concat_channels", "add", "global_avg_pool", "max_pool2d",
        "softmax_channels", "mul", "scale", "add_scalar", "sum", "col_sum", "add_row", "div_rows",
        "clamp_min", "feature_to_rows", "rows_to_feature", "concat_batch"};
    std::multiset<std::string> listed;
    std::set<std::string> blocks;
    for (const auto& e : gradcheck_suite::registry()) {
      if (e.category == gradcheck_suite::Category::op) listed.insert(e.name);
      else blocks.insert(e.name);
    }
    CHECK(listed.size() == ops.size());
    for (const std::string& op : ops) CHECK_MESSAGE(listed.count(op) == 1, op);
    for (const char* b : {"dot_product_attention", "linear_attention", "aem", "fam", "focal_loss_gamma0",
                          "focal_loss_gamma2", "cross_entropy", "total_loss", "abcnet_mini"}) {
      CHECK_MESSAGE(blocks.count(b) == 1, b);
    }
  }

  TEST_CASE("op-level suite passes") {
    std::vector<gradcheck_suite::Outcome> ops;
    for (const auto& e : gradcheck_suite::registry()) {
      if (e.category == gradcheck_suite::Category::op) ops.push_back({e.name, e.category, e.run()});
    }
    for (const auto& o : ops) CHECK_MESSAGE(o.result.passed(1e-3), o.name << " " << o.result.max_rel_error);
    const std::string text = gradcheck_suite::report(ops);
    CHECK(text.find("matmul") != std::string::npos);
    CHECK(text.find("PASS") != std::string::npos);
  }
}

TEST_SUITE("optim") {
  TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
    Tensor w = Tensor::from({3}, {1, -2, 3});
    const Tensor g = Tensor::zeros({3});
    OptimizerState s;
    s.config.weight_decay = 0;
    Tensor* p[] = {&w};
    const Tensor* gp[] = {&g};
    for (int i = 0; i < 5; ++i) adamw_step(p, gp, s);
    CHECK(w == Tensor::from({3}, {1, -2, 3}));
    CHECK(s.step == 5);
  }

  TEST_CASE("first step matches the bias-corrected closed form") {
    // m_hat = g and v_hat = g^2 after one step, so the update is lr*(sign(g) + wd*w) up to eps.
    Tensor w = Tensor::from({2}, {1.0, -0.5});
    const Tensor g = Tensor::from({2}, {0.3, -2.0});
    OptimizerState s;
    s.config.learning_rate = 0.1;
    s.config.weight_decay = 0.01;
    Tensor* p[] = {&w};
    const Tensor* gp[] = {&g};
    adamw_step(p, gp, s);
    CHECK(w[0] == doctest::Approx(1.0 - 0.1 * (0.3 / (0.3 + 1e-8) + 0.01)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(-0.5 - 0.1 * (-2.0 / (2.0 + 1e-8) - 0.005)).epsilon(1e-14));
  }

  TEST_CASE("descends on w^2/2 and converges on a convex quadratic") {
    Tensor w = Tensor::from({1}, {1.0});
    OptimizerState s;
    Tensor grad = w;
    Tensor* p[] = {&w};
    const Tensor* gp[] = {&grad};
    adamw_step(p, gp, s);
    CHECK(std::abs(w[0]) < 1.0);

    // f(x) = 1/2 (x - c)^T A (x - c), minimizer c.
    const double a11 = 3, a12 = 0.5, a22 = 1, c1 = 0.7, c2 = -0.4;
    Tensor x = Tensor::from({2}, {-1.0, 2.0});
    OptimizerState q;
    q.config.learning_rate = 0.05;
    q.config.weight_decay = 0;
    Tensor gx({2});
    Tensor* xp[] = {&x};
    const Tensor* gxp[] = {&gx};
    for (int i = 0; i < 200; ++i) {
      gx[0] = a11 * (x[0] - c1) + a12 * (x[1] - c2);
      gx[1] = a12 * (x[0] - c1) + a22 * (x[1] - c2);
      adamw_step(xp, gxp, q);
    }
    CHECK(std::abs(x[0] - c1) < 1e-3);
    CHECK(std::abs(x[1] - c2) < 1e-3);
  }

  TEST_CASE("shape mismatch is rejected") {
    Tensor w({2});
    const Tensor g({3});
    OptimizerState s;
    Tensor* p[] = {&w};
    const Tensor* gp[] = {&g};
    CHECK_THROWS_AS(adamw_step(p, gp, s), DimensionError);
  }
}
