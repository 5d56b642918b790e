// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "abcnet/autograd.hpp"

namespace abcnet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Denominator floor of the relative error.
  double floor = 1e-8;
  /// Upper bound on perturbed coordinates across all inputs; 0 checks all.
  std::int64_t max_coords = 0;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t coords = 0;
  /// "input:index" of the worst coordinate.
  std::string worst;
  double analytic = 0.0;
  double numeric = 0.0;

  bool passed(double tolerance = 1e-3) const { return max_rel_error <= tolerance; }
};

/// Builds a single-element loss from leaf Vars bound to the inputs. The
/// function is called once with gradients enabled and twice per checked
/// coordinate with gradients disabled, so it must be pure in its inputs.
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

/// Central differences of a plain scalar function at every coordinate of x.
Tensor numerical_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                          double step = 1e-5);

/// Compares an analytic gradient against numerical_gradient.
GradCheckResult grad_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic,
                           const Tensor& x, const GradCheckOptions& options = {});

}  // namespace abcnet
