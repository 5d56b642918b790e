// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "abcnet/autograd.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet::losses {

inline constexpr std::uint8_t kIgnoreLabel = 255;
/// Probabilities are clamped to [eps, 1 - eps] inside the logarithms.
inline constexpr double kProbEpsilon = 1e-7;

/// B x H x W class indices; kIgnoreLabel marks excluded pixels.
struct Labels {
  std::int64_t batch = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  std::int64_t size() const { return batch * height * width; }
};

struct LossConfig {
  double gamma = 2.0;
};

// Per-class binary decomposition: every valid pixel contributes K terms
//   -y (1-p)^g log p - (1-y) p^g log(1-p)
// with y = [label == k] and p the class-k probability; the result is the mean
// over valid pixels and classes. Probabilities are B x K x H x W.

double cross_entropy(const Tensor& probs, const Labels& y);
double focal_loss(const Tensor& probs, const Labels& y, double gamma);

Var cross_entropy(Var probs, const Labels& y);
Var focal_loss(Var probs, const Labels& y, double gamma);

/// CE(softmax(principal)) + focal(softmax(aux1)) + focal(softmax(aux2)).
Var total_loss(Var principal_logits, Var aux1_logits, Var aux2_logits, const Labels& y,
               const LossConfig& cfg = {});

}  // namespace abcnet::losses
