// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace abcnet {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Graph g(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.parameter("", t));
  const Var loss = f(g, vars);
  if (loss.value().numel() != 1) throw ContractError("grad_check: loss must be a single element");
  return loss.value()[0];
}

void note(GradCheckResult& r, double a, double n, double floor, const std::string& where) {
  const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
  ++r.coords;
  if (r.worst.empty() || rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst = where;
    r.analytic = a;
    r.numeric = n;
  }
}

std::vector<std::int64_t> choose(std::int64_t numel, std::int64_t quota, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
  std::iota(idx.begin(), idx.end(), 0);
  if (quota >= numel) return idx;
  for (std::int64_t i = 0; i < quota; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(numel - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(quota));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Graph g(true);
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.leaf(t));
    const Var loss = f(g, vars);
    g.backward(loss);
    for (const Var& v : vars) analytic.push_back(g.grad(v));
  }
  std::int64_t total = 0;
  for (const Tensor& t : inputs) total += t.numel();
  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::int64_t n = inputs[k].numel();
    std::int64_t quota = n;
    if (options.max_coords > 0 && total > options.max_coords) {
      quota = std::max<std::int64_t>(1, (options.max_coords * n + total - 1) / total);
    }
    for (std::int64_t i : choose(n, quota, rng)) {
      double& x = inputs[k][i];
      const double saved = x;
      x = saved + options.step;
      const double up = evaluate(f, inputs);
      x = saved - options.step;
      const double down = evaluate(f, inputs);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      note(result, analytic[k][i], numeric, options.floor,
           std::to_string(k) + ":" + std::to_string(i));
    }
  }
  return result;
}

Tensor numerical_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                          double step) {
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

GradCheckResult grad_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic,
                           const Tensor& x, const GradCheckOptions& options) {
  if (!analytic.same_shape(x)) throw DimensionError("grad_check: gradient extents differ from x");
  const Tensor numeric = numerical_gradient(f, x, options.step);
  GradCheckResult result;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    note(result, analytic[i], numeric[i], options.floor, "0:" + std::to_string(i));
  }
  return result;
}

}  // namespace abcnet
