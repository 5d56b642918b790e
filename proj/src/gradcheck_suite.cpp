// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/gradcheck_suite.hpp"

#include <cstdio>
#include <memory>
#include <sstream>

#include "abcnet/attention.hpp"
#include "abcnet/losses.hpp"
#include "abcnet/model.hpp"

namespace abcnet::gradcheck_suite {

namespace {

namespace ag = autograd;

// Random weights make every output coordinate matter to the scalar.
Var weighted_sum(Var out, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(out, out.graph->constant(random_uniform(out.shape(), rng))));
}

Tensor rand(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_uniform(std::move(s), rng, lo, hi);
}

GradCheckResult worst(GradCheckResult a, const GradCheckResult& b) {
  if (b.max_rel_error > a.max_rel_error) {
    a.max_rel_error = b.max_rel_error;
    a.worst = b.worst;
    a.analytic = b.analytic;
    a.numeric = b.numeric;
  }
  a.coords += b.coords;
  return a;
}

using Unary = std::function<Var(Var)>;

GradCheckResult unary(const Unary& op, Tensor x, std::uint64_t seed = 11) {
  return grad_check([=](Graph&, std::span<const Var> v) { return weighted_sum(op(v[0]), seed); },
                    {std::move(x)});
}

using Binary = std::function<Var(Var, Var)>;

GradCheckResult binary(const Binary& op, Tensor a, Tensor b, std::uint64_t seed = 12) {
  return grad_check([=](Graph&, std::span<const Var> v) { return weighted_sum(op(v[0], v[1]), seed); },
                    {std::move(a), std::move(b)});
}

losses::Labels random_labels(std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t k,
                              std::uint64_t seed) {
  Rng rng(seed);
  losses::Labels y{b, h, w, {}};
  for (std::int64_t i = 0; i < y.size(); ++i) {
    y.values.push_back(rng.below(10) == 0 ? losses::kIgnoreLabel
                                          : static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(k))));
  }
  return y;
}

// Gradient check over one block of the mini network: the named parameters
// with the given prefixes become leaves next to the block inputs.
using BlockFn = std::function<Var(model::Context&, std::span<const Var>)>;

GradCheckResult block(const std::vector<std::string>& prefixes, std::vector<Tensor> inputs,
                      const BlockFn& fn, std::int64_t max_coords, std::uint64_t seed = 13) {
  const model::ABCNetConfig cfg = model::ABCNetConfig::mini();
  auto weights = std::make_shared<model::NetworkWeights>(model::NetworkWeights::init(cfg, seed));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < weights->names().size(); ++i) {
    const std::string& n = weights->names()[i];
    for (const std::string& p : prefixes) {
      if (p.empty() || n.rfind(p + ".", 0) == 0) {
        names.push_back(n);
        inputs.push_back(weights->values()[i]);
        break;
      }
    }
  }
  const std::size_t n_inputs = inputs.size() - names.size();
  GradCheckOptions opts;
  opts.max_coords = max_coords;
  opts.seed = seed;
  return grad_check(
      [=](Graph& g, std::span<const Var> v) {
        model::Context ctx(g, *weights, ops::BatchNormMode::train);
        for (std::size_t i = 0; i < names.size(); ++i) ctx.overrides[names[i]] = v[n_inputs + i];
        return fn(ctx, v.subspan(0, n_inputs));
      },
      std::move(inputs), opts);
}

std::vector<Entry> build() {
  std::vector<Entry> r;
  auto op = [&](std::string name, std::function<GradCheckResult()> f) {
    r.push_back({std::move(name), Category::op, std::move(f)});
  };
  auto blk = [&](std::string name, std::function<GradCheckResult()> f) {
    r.push_back({std::move(name), Category::block, std::move(f)});
  };

  op("matmul", [] { return binary(ag::matmul, rand({4, 5}, 1), rand({5, 3}, 2)); });
  op("transpose", [] { return unary(ag::transpose, rand({3, 6}, 3)); });
  op("conv2d", [] {
    const auto spec = ops::ConvSpec::square(3, 4, 3, 2, true);
    const auto point = ops::ConvSpec::square(3, 5, 1, 1, true);
    auto check = [](const ops::ConvSpec& s, std::uint64_t seed) {
      return grad_check(
          [s](Graph&, std::span<const Var> v) { return weighted_sum(ag::conv2d(v[0], v[1], v[2], s), 21); },
          {rand({2, 3, 7, 6}, seed), rand(s.weight_shape(), seed + 1), rand({s.out_channels}, seed + 2)});
    };
    return worst(check(spec, 4), check(point, 7));
  });
  op("batchnorm2d", [] {
    auto check = [](ops::BatchNormMode mode) {
      auto stats = std::make_shared<ops::BatchNormStats>(ops::BatchNormStats::fresh(3));
      Rng rng(5);
      for (double& m : stats->running_mean.data()) m = rng.uniform(-0.5, 0.5);
      for (double& s : stats->running_var.data()) s = rng.uniform(0.5, 2.0);
      return grad_check(
          [=](Graph&, std::span<const Var> v) {
            ops::BatchNormStats local = *stats;
            return weighted_sum(ag::batchnorm2d(v[0], v[1], v[2], local, mode), 22);
          },
          {rand({2, 3, 4, 3}, 8), rand({3}, 9, 0.5, 1.5), rand({3}, 10)});
    };
    return worst(check(ops::BatchNormMode::train), check(ops::BatchNormMode::infer));
  });
  op("relu", [] { return unary(ag::relu, rand({3, 4, 5, 2}, 14)); });
  op("softmax_rows", [] { return unary(ag::softmax_rows, rand({5, 7}, 15, -2, 2)); });
  op("l2_normalize_rows", [] { return unary(ag::l2_normalize_rows, rand({6, 4}, 16)); });
  op("bilinear_resize", [] {
    return unary([](Var x) { return ag::bilinear_resize(x, 7, 5); }, rand({1, 2, 4, 3}, 17));
  });
  op("bilinear_upsample", [] {
    return unary([](Var x) { return ag::bilinear_upsample(x, 2); }, rand({2, 2, 3, 3}, 18));
  });
  op("concat_channels", [] { return binary(ag::concat_channels, rand({2, 2, 3, 3}, 19), rand({2, 3, 3, 3}, 20)); });
  op("add", [] { return binary(ag::add, rand({2, 3, 2, 2}, 23), rand({2, 3, 2, 2}, 24)); });
  op("global_avg_pool", [] { return unary(ag::global_avg_pool, rand({2, 3, 4, 5}, 25)); });
  op("max_pool2d", [] {
    return unary([](Var x) { return ag::max_pool2d(x, 3, 2, 1); }, rand({2, 2, 7, 6}, 26));
  });
  op("softmax_channels", [] { return unary(ag::softmax_channels, rand({2, 4, 3, 3}, 27, -2, 2)); });
  op("mul", [] { return binary(ag::mul, rand({3, 4}, 28), rand({3, 4}, 29)); });
  op("scale", [] { return unary([](Var x) { return ag::scale(x, -1.7); }, rand({3, 4}, 30)); });
  op("add_scalar", [] { return unary([](Var x) { return ag::add_scalar(x, 2.5); }, rand({3, 4}, 31)); });
  op("sum", [] {
    return grad_check([](Graph&, std::span<const Var> v) { return ag::scale(ag::sum(v[0]), 0.3); },
                      {rand({3, 4}, 32)});
  });
  op("col_sum", [] { return unary(ag::col_sum, rand({5, 3}, 33)); });
  op("add_row", [] { return binary(ag::add_row, rand({5, 3}, 34), rand({1, 3}, 35)); });
  op("div_rows", [] { return binary(ag::div_rows, rand({5, 3}, 36), rand({5, 1}, 37, 0.5, 2.0)); });
  op("clamp_min", [] {
    // Values sit away from the floor so no coordinate straddles the kink.
    Tensor x = rand({4, 5}, 38, 0.2, 1.0);
    for (std::int64_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    return unary([](Var v) { return ag::clamp_min(v, 0.1); }, x);
  });
  op("feature_to_rows", [] {
    return unary([](Var x) { return ag::feature_to_rows(x, 1); }, rand({2, 3, 2, 4}, 39));
  });
  op("rows_to_feature", [] {
    return unary([](Var x) { return ag::rows_to_feature(x, 2, 3); }, rand({6, 4}, 40));
  });
  op("concat_batch", [] {
    return binary([](Var a, Var b) { return ag::concat_batch({a, b}); }, rand({1, 2, 3, 3}, 41),
                  rand({1, 2, 3, 3}, 42));
  });

  blk("identity", [] {
    return unary([](Var x) { return x; }, rand({4, 4}, 43));
  });
  blk("dot_product_attention", [] {
    return grad_check(
        [](Graph&, std::span<const Var> v) {
          return weighted_sum(attention::dot_product_attention(v[0], v[1], v[2]), 44);
        },
        {rand({7, 3}, 45), rand({7, 3}, 46), rand({7, 4}, 47)});
  });
  blk("linear_attention", [] {
    return grad_check(
        [](Graph&, std::span<const Var> v) {
          return weighted_sum(attention::linear_attention(v[0], v[1], v[2]), 48);
        },
        {rand({7, 3}, 49), rand({7, 3}, 50), rand({7, 4}, 51)});
  });
  blk("attention_projection", [] {
    return grad_check(
        [](Graph&, std::span<const Var> v) {
          const auto p = attention::project_qkv(v[0], v[1], v[2], v[3]);
          return weighted_sum(attention::linear_attention(p.q, p.k, p.v), 52);
        },
        {rand({6, 5}, 53), rand({5, 3}, 54), rand({5, 3}, 55), rand({5, 4}, 56)});
  });
  blk("aem", [] {
    return block({"aem4"}, {rand({2, 64, 4, 4}, 57)},
                 [](model::Context& ctx, std::span<const Var> v) {
                   return weighted_sum(model::aem_forward(ctx, "aem4", v[0], 64 / 8), 58);
                 },
                 400);
  });
  blk("fam", [] {
    return block({"fusion"}, {rand({2, 16, 8, 8}, 59), rand({2, 32, 8, 8}, 60)},
                 [](model::Context& ctx, std::span<const Var> v) {
                   return weighted_sum(model::fam_forward(ctx, v[0], v[1], model::ABCNetConfig::mini()), 61);
                 },
                 400);
  });
  auto loss_entry = [&](std::string name, double gamma, bool ce) {
    blk(std::move(name), [gamma, ce] {
      const losses::Labels y = random_labels(2, 3, 4, 4, 62);
      return grad_check(
          [=](Graph&, std::span<const Var> v) {
            const Var p = ag::softmax_channels(v[0]);
            return ce ? losses::cross_entropy(p, y) : losses::focal_loss(p, y, gamma);
          },
          {rand({2, 4, 3, 4}, 63, -2, 2)});
    });
  };
  loss_entry("cross_entropy", 0.0, true);
  loss_entry("focal_loss_gamma0", 0.0, false);
  loss_entry("focal_loss_gamma2", 2.0, false);
  blk("total_loss", [] {
    const losses::Labels y = random_labels(1, 8, 8, 3, 64);
    return grad_check(
        [=](Graph&, std::span<const Var> v) {
          return losses::total_loss(v[0], ag::bilinear_upsample(v[1], 2), ag::bilinear_upsample(v[2], 4), y);
        },
        {rand({1, 3, 8, 8}, 65, -2, 2), rand({1, 3, 4, 4}, 66, -2, 2), rand({1, 3, 2, 2}, 67, -2, 2)});
  });
  blk("abcnet_mini", [] {
    model::ABCNetConfig cfg = model::ABCNetConfig::mini();
    cfg.training_mode = true;
    const losses::Labels y = random_labels(1, 64, 64, cfg.num_classes, 68);
    return block({""}, {rand({1, 3, 64, 64}, 69)},
                 [=](model::Context& ctx, std::span<const Var> v) {
                   const model::ForwardOutput out = model::abcnet_forward(ctx, v[0], cfg);
                   return losses::total_loss(out.logits, out.aux1, out.aux2, y);
                 },
                 96);
  });
  return r;
}

}  // namespace

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = build();
  return entries;
}

std::vector<Outcome> run(const std::string& filter) {
  std::vector<Outcome> out;
  for (const Entry& e : registry()) {
    if (!filter.empty() && e.name.find(filter) == std::string::npos) continue;
    out.push_back({e.name, e.category, e.run()});
  }
  return out;
}

std::string report(const std::vector<Outcome>& outcomes, double tolerance) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %-6s %7s %12s  %s\n", "check", "kind", "coords", "max_rel_err",
                "status");
  os << line;
  double worst_err = 0.0;
  for (const Outcome& o : outcomes) {
    worst_err = std::max(worst_err, o.result.max_rel_error);
    std::snprintf(line, sizeof(line), "%-24s %-6s %7lld %12.3e  %s%s%s\n", o.name.c_str(),
                  o.category == Category::op ? "op" : "block", static_cast<long long>(o.result.coords),
                  o.result.max_rel_error, o.result.passed(tolerance) ? "PASS" : "FAIL",
                  o.result.worst.empty() ? "" : " at ", o.result.worst.c_str());
    os << line;
  }
  std::snprintf(line, sizeof(line), "worst relative error %.3e over %zu checks (tolerance %.0e): %s\n",
                worst_err, outcomes.size(), tolerance, all_passed(outcomes, tolerance) ? "PASS" : "FAIL");
  os << line;
  return os.str();
}

bool all_passed(const std::vector<Outcome>& outcomes, double tolerance) {
  for (const Outcome& o : outcomes) {
    if (!o.result.passed(tolerance)) return false;
  }
  return true;
}

}  // namespace abcnet::gradcheck_suite
