// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abcnet/tensor.hpp"

namespace abcnet {

struct AdamWConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamWConfig config;
  std::int64_t step = 0;
  /// First and second moments, one per parameter; allocated on the first step.
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One AdamW update with bias correction and decoupled weight decay:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                OptimizerState& state);

}  // namespace abcnet
