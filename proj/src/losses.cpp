// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/losses.hpp"

#include <algorithm>
#include <cmath>

namespace abcnet::losses {

namespace {

void check(const Tensor& probs, const Labels& y) {
  if (probs.rank() != 4 || probs.dim(0) != y.batch || probs.dim(2) != y.height ||
      probs.dim(3) != y.width) {
    throw ShapeError("probabilities " + shape_str(probs.shape()) + " do not match labels " +
                     std::to_string(y.batch) + "x" + std::to_string(y.height) + "x" +
                     std::to_string(y.width));
  }
  if (static_cast<std::int64_t>(y.values.size()) != y.size()) {
    throw ShapeError("label buffer holds " + std::to_string(y.values.size()) + " values, expected " +
                     std::to_string(y.size()));
  }
  const std::int64_t k = probs.dim(1);
  for (std::uint8_t v : y.values) {
    if (v != kIgnoreLabel && v >= k) {
      throw LabelError("label " + std::to_string(v) + " outside [0, " + std::to_string(k) + ")");
    }
  }
}

double term(double p, bool positive, double gamma) {
  const double pc = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  if (positive) return -std::pow(1.0 - pc, gamma) * std::log(pc);
  return -std::pow(pc, gamma) * std::log(1.0 - pc);
}

double term_grad(double p, bool positive, double gamma) {
  if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) return 0.0;
  if (positive) {
    double g = -std::pow(1.0 - p, gamma) / p;
    if (gamma != 0.0) g += gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p);
    return g;
  }
  double g = std::pow(p, gamma) / (1.0 - p);
  if (gamma != 0.0) g -= gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p);
  return g;
}

/// Sum of terms and the number of (pixel, class) pairs.
std::pair<double, std::int64_t> reduce(const Tensor& probs, const Labels& y, double gamma) {
  const std::int64_t k = probs.dim(1), plane = y.height * y.width;
  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t b = 0; b < y.batch; ++b) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::uint8_t label = y.values[static_cast<std::size_t>(b * plane + i)];
      if (label == kIgnoreLabel) continue;
      for (std::int64_t c = 0; c < k; ++c) {
        total += term(probs[(b * k + c) * plane + i], c == label, gamma);
      }
      count += k;
    }
  }
  return {total, count};
}

}  // namespace

double focal_loss(const Tensor& probs, const Labels& y, double gamma) {
  if (gamma < 0.0) throw ContractError("focal gamma must be >= 0");
  check(probs, y);
  const auto [total, count] = reduce(probs, y, gamma);
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double cross_entropy(const Tensor& probs, const Labels& y) { return focal_loss(probs, y, 0.0); }

Var focal_loss(Var probs, const Labels& y, double gamma) {
  const double value = focal_loss(probs.value(), y, gamma);
  Graph& g = *probs.graph;
  return g.record("focal_loss", Tensor::scalar(value), {probs}, [y, gamma](const BackwardArgs& args) {
    Tensor* dp = args.grads[0];
    if (!dp) return;
    const Tensor& P = *args.inputs[0];
    const std::int64_t k = P.dim(1), plane = y.height * y.width;
    std::int64_t count = 0;
    for (std::uint8_t v : y.values)
      if (v != kIgnoreLabel) count += k;
    if (count == 0) return;
    const double scale = args.out_grad[0] / static_cast<double>(count);
    for (std::int64_t b = 0; b < y.batch; ++b) {
      for (std::int64_t i = 0; i < plane; ++i) {
        const std::uint8_t label = y.values[static_cast<std::size_t>(b * plane + i)];
        if (label == kIgnoreLabel) continue;
        for (std::int64_t c = 0; c < k; ++c) {
          const std::int64_t idx = (b * k + c) * plane + i;
          (*dp)[idx] += scale * term_grad(P[idx], c == label, gamma);
        }
      }
    }
  });
}

Var cross_entropy(Var probs, const Labels& y) { return focal_loss(probs, y, 0.0); }

Var total_loss(Var principal_logits, Var aux1_logits, Var aux2_logits, const Labels& y,
               const LossConfig& cfg) {
  const Var pri = cross_entropy(autograd::softmax_channels(principal_logits), y);
  const Var a1 = focal_loss(autograd::softmax_channels(aux1_logits), y, cfg.gamma);
  const Var a2 = focal_loss(autograd::softmax_channels(aux2_logits), y, cfg.gamma);
  return autograd::add(autograd::add(pri, a1), a2);
}

}  // namespace abcnet::losses
