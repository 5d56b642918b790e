// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "abcnet/gradcheck.hpp"

namespace abcnet::gradcheck_suite {

enum class Category { op, block };

struct Entry {
  std::string name;
  Category category;
  std::function<GradCheckResult()> run;
};

/// Every differentiable graph op once, then the composite blocks.
const std::vector<Entry>& registry();

struct Outcome {
  std::string name;
  Category category;
  GradCheckResult result;
};

/// Runs the entries whose name contains `filter` (all when empty).
std::vector<Outcome> run(const std::string& filter = {});

/// One line per entry with the worst relative error, then a summary line.
std::string report(const std::vector<Outcome>& outcomes, double tolerance = 1e-3);
bool all_passed(const std::vector<Outcome>& outcomes, double tolerance = 1e-3);

}  // namespace abcnet::gradcheck_suite
