// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

#include "abcnet/autograd.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet::attention {

/// W_q, W_k: D_x x D_k; W_v: D_x x D_v.
struct AttentionProjections {
  Tensor w_q;
  Tensor w_k;
  Tensor w_v;

  void validate() const;
};

/// Q, K: N x D_k; V: N x D_v.
struct QKV {
  Tensor q;
  Tensor k;
  Tensor v;

  void validate() const;
  std::int64_t tokens() const { return q.dim(0); }
  std::int64_t key_dim() const { return q.dim(1); }
  std::int64_t value_dim() const { return v.dim(1); }
};

enum class FeatureMap {
  identity,
  /// Elementwise e^x. Diagnostic only; it does not reproduce softmax attention.
  exponential,
  /// x -> [1, x/|x|], so phi(q)^T phi(k) = 1 + cos(q, k).
  l2_plus_one,
};

std::string_view feature_map_name(FeatureMap m);

struct FeatureMapPair {
  FeatureMap phi = FeatureMap::identity;     // applied to Q
  FeatureMap varphi = FeatureMap::identity;  // applied to K
};

/// Row-wise image of an N x D matrix; l2_plus_one widens rows to D + 1.
Tensor apply_feature_map(FeatureMap m, const Tensor& x);

/// Lower bound applied to linear-attention denominators.
inline constexpr double kDenominatorFloor = 1e-8;

struct Diagnostics {
  /// Number of denominators raised to kDenominatorFloor.
  std::int64_t clamped_denominators = 0;
};

QKV project_qkv(const Tensor& x, const AttentionProjections& proj);

/// softmax(Q K^T) V with the row-max shift; never holds more than a row tile
/// of weights at once.
Tensor dot_product_attention(const QKV& qkv);

/// Generalized kernel form evaluated pair by pair. Throws DegenerateError on a
/// non-positive denominator.
Tensor kernel_attention_pairwise(const QKV& qkv, const FeatureMapPair& maps);
/// Same quantity with phi(K)^T V formed first; no N x N array.
Tensor kernel_attention_factorized(const QKV& qkv, const FeatureMapPair& maps);

/// (colsum(V) + Qn (Kn^T V)) / (N + Qn colsum(Kn)) with Qn, Kn row-normalized.
Tensor linear_attention_fast(const QKV& qkv, Diagnostics* diag = nullptr);
/// sum_j (1 + qn_i . kn_j) v_j / sum_j (1 + qn_i . kn_j), O(N^2).
Tensor linear_attention_pairwise(const QKV& qkv, Diagnostics* diag = nullptr);

enum class Kind { dot_product, linear };

std::string_view kind_name(Kind k);

struct CostReport {
  /// Multiply and multiply-accumulate operations of the kernel's loops.
  std::int64_t flops = 0;
  /// Largest set of live intermediate values, counting the N x N weights of
  /// the materialized dot-product form.
  std::int64_t peak_intermediate_values = 0;
  /// Size of the attention weight array (N*N for dot-product, 0 for linear).
  std::int64_t weight_array_values = 0;
  /// Filled by the benchmark harness; negative when not measured.
  double wall_time = -1.0;
};

/// Dot-product: N^2 D_k (scores) + N^2 D_v (weights x V) + N D_v (row scaling).
/// Linear: 4 N D_k (two row normalizations) + 2 N D_k D_v (Kn^T V, Qn KV)
/// + N D_k (denominator dots) + N D_v (row scaling).
CostReport count_cost(Kind kind, std::int64_t n, std::int64_t key_dim, std::int64_t value_dim);

// Raw kernels over contiguous row-major buffers. T is float or double; the
// Tensor entry points above run the double instantiation.
namespace kernels {

template <class T>
void dot_product(std::int64_t n, std::int64_t dk, std::int64_t dv, const T* q, const T* k,
                 const T* v, T* out, std::int64_t row_tile = 64);

/// Returns the number of clamped denominators.
template <class T>
std::int64_t linear(std::int64_t n, std::int64_t dk, std::int64_t dv, const T* q, const T* k,
                    const T* v, T* out);

/// e^x for float lanes via range reduction and a degree-6 polynomial;
/// relative error below 2e-7 on [-87, 88]. Double uses std::exp.
void exp_inplace(float* x, std::int64_t n);
void exp_inplace(double* x, std::int64_t n);

}  // namespace kernels

// Differentiable forms for networks and gradient checks.
struct QKVVars {
  Var q;
  Var k;
  Var v;
};

QKVVars project_qkv(Var x, Var w_q, Var w_k, Var w_v);
Var dot_product_attention(Var q, Var k, Var v);
Var linear_attention(Var q, Var k, Var v, std::int64_t* clamp_count = nullptr);

}  // namespace abcnet::attention
