// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "abcnet/tensor.hpp"

// Forward operators on plain tensors. Feature maps are B x C x H x W,
// matrices are rows x cols. The differentiable wrappers in autograd.hpp call
// into these.
namespace abcnet::ops {

struct Extent2 {
  std::int64_t h = 1;
  std::int64_t w = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct ConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  Extent2 kernel{3, 3};
  Extent2 stride{1, 1};
  Extent2 padding{1, 1};
  bool bias = false;

  /// k x k convolution with "same"-style padding k/2.
  static ConvSpec square(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                         bool bias = false);

  Shape weight_shape() const { return {out_channels, in_channels, kernel.h, kernel.w}; }
  /// floor((in + 2p - k)/s) + 1 per axis; throws DimensionError if < 1.
  Extent2 output_extent(Extent2 in) const;
  std::int64_t parameter_count() const;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Reference cross-correlation: six nested loops, no lowering.
Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec);
/// Patch-matrix lowering onto gemm.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec);

/// Patch matrix of one batch item: (C*kh*kw) x (H'*W').
void im2col(const double* x, std::int64_t channels, Extent2 in, const ConvSpec& spec, Extent2 out,
            double* cols);
/// Adjoint of im2col; accumulates into dx.
void col2im(const double* cols, std::int64_t channels, Extent2 in, const ConvSpec& spec,
            Extent2 out, double* dx);

enum class BatchNormMode { train, infer };

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormStats fresh(std::int64_t channels);
};

/// Per-channel normalization. In train mode batch statistics are used and the
/// running estimates are updated (unbiased variance, momentum blend).
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BatchNormMode mode);

Tensor relu(const Tensor& x);
/// Row-wise softmax of a 2-D tensor, stabilized by subtracting the row max.
Tensor softmax_rows(const Tensor& x);

inline constexpr double kL2Epsilon = 1e-12;
/// x_i / max(|x_i|, 1e-12) for every row.
Tensor l2_normalize_rows(const Tensor& x);

/// Half-pixel (align_corners = false) bilinear resize of a B x C x H x W map.
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
Tensor bilinear_upsample(const Tensor& x, std::int64_t scale);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor global_avg_pool(const Tensor& x);

/// Max pooling with implicit -inf padding; ties resolve to the first element
/// in raster order.
Tensor max_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride, std::int64_t padding);

/// Softmax across the channel axis of a B x K x H x W map.
Tensor softmax_channels(const Tensor& logits);

/// B x C x H x W <-> (H*W) x C for a single batch item, raster order.
Tensor feature_to_rows(const Tensor& x, std::int64_t batch_index);
Tensor rows_to_feature(const Tensor& rows, std::int64_t height, std::int64_t width);

namespace detail {

/// Source taps of one output coordinate for half-pixel linear interpolation.
struct LinearTap {
  std::int64_t i0 = 0;
  std::int64_t i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

std::vector<LinearTap> linear_taps(std::int64_t in, std::int64_t out);

}  // namespace detail

}  // namespace abcnet::ops
