// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/attention.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "abcnet/gemm.hpp"
#include "abcnet/ops.hpp"

namespace abcnet::attention {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " must be a matrix, got " + shape_str(t.shape()));
  }
}

}  // namespace

void AttentionProjections::validate() const {
  require_matrix(w_q, "W_q");
  require_matrix(w_k, "W_k");
  require_matrix(w_v, "W_v");
  if (w_q.dim(0) != w_k.dim(0) || w_q.dim(0) != w_v.dim(0)) {
    throw DimensionError("projections disagree on the input extent");
  }
  if (w_q.dim(1) != w_k.dim(1)) throw DimensionError("W_q and W_k must share D_k");
}

void QKV::validate() const {
  require_matrix(q, "Q");
  require_matrix(k, "K");
  require_matrix(v, "V");
  if (q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0)) {
    throw DimensionError("Q, K, V disagree on N: " + shape_str(q.shape()) + " " +
                         shape_str(k.shape()) + " " + shape_str(v.shape()));
  }
  if (q.dim(1) != k.dim(1)) throw DimensionError("Q and K must share D_k");
}

std::string_view feature_map_name(FeatureMap m) {
  switch (m) {
    case FeatureMap::identity: return "identity";
    case FeatureMap::exponential: return "exponential";
    case FeatureMap::l2_plus_one: return "l2_plus_one";
  }
  return "?";
}

std::string_view kind_name(Kind k) { return k == Kind::dot_product ? "dot_product" : "linear"; }

Tensor apply_feature_map(FeatureMap m, const Tensor& x) {
  require_matrix(x, "feature map input");
  switch (m) {
    case FeatureMap::identity:
      return x;
    case FeatureMap::exponential: {
      Tensor out = x;
      for (auto& v : out.data()) v = std::exp(v);
      return out;
    }
    case FeatureMap::l2_plus_one: {
      const Tensor n = ops::l2_normalize_rows(x);
      const std::int64_t rows = x.dim(0), d = x.dim(1);
      Tensor out({rows, d + 1});
      for (std::int64_t i = 0; i < rows; ++i) {
        out[i * (d + 1)] = 1.0;
        for (std::int64_t j = 0; j < d; ++j) out[i * (d + 1) + 1 + j] = n[i * d + j];
      }
      return out;
    }
  }
  throw ContractError("unknown feature map");
}

QKV project_qkv(const Tensor& x, const AttentionProjections& proj) {
  proj.validate();
  require_matrix(x, "X");
  if (x.dim(1) != proj.w_q.dim(0)) {
    throw DimensionError("X has " + std::to_string(x.dim(1)) + " columns, projections expect " +
                         std::to_string(proj.w_q.dim(0)));
  }
  return QKV{ops::matmul(x, proj.w_q), ops::matmul(x, proj.w_k), ops::matmul(x, proj.w_v)};
}

Tensor dot_product_attention(const QKV& qkv) {
  qkv.validate();
  Tensor out({qkv.tokens(), qkv.value_dim()});
  kernels::dot_product<double>(qkv.tokens(), qkv.key_dim(), qkv.value_dim(), qkv.q.ptr(),
                               qkv.k.ptr(), qkv.v.ptr(), out.ptr());
  return out;
}

namespace {

void maps_compatible(const Tensor& fq, const Tensor& fk) {
  if (fq.dim(1) != fk.dim(1)) {
    throw DimensionError("feature maps produce different widths: " + std::to_string(fq.dim(1)) +
                         " vs " + std::to_string(fk.dim(1)));
  }
}

void check_denominator(double den, std::int64_t row) {
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw DegenerateError("similarity denominator " + std::to_string(den) + " at row " +
                          std::to_string(row));
  }
}

}  // namespace

Tensor kernel_attention_pairwise(const QKV& qkv, const FeatureMapPair& maps) {
  qkv.validate();
  const Tensor fq = apply_feature_map(maps.phi, qkv.q);
  const Tensor fk = apply_feature_map(maps.varphi, qkv.k);
  maps_compatible(fq, fk);
  const std::int64_t n = qkv.tokens(), d = fq.dim(1), dv = qkv.value_dim();
  Tensor out({n, dv});
  std::vector<double> num(static_cast<std::size_t>(dv));
  for (std::int64_t i = 0; i < n; ++i) {
    std::fill(num.begin(), num.end(), 0.0);
    double den = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      double sim = 0.0;
      for (std::int64_t c = 0; c < d; ++c) sim += fq[i * d + c] * fk[j * d + c];
      den += sim;
      for (std::int64_t c = 0; c < dv; ++c) num[static_cast<std::size_t>(c)] += sim * qkv.v[j * dv + c];
    }
    check_denominator(den, i);
    for (std::int64_t c = 0; c < dv; ++c) out[i * dv + c] = num[static_cast<std::size_t>(c)] / den;
  }
  return out;
}

Tensor kernel_attention_factorized(const QKV& qkv, const FeatureMapPair& maps) {
  qkv.validate();
  const Tensor fq = apply_feature_map(maps.phi, qkv.q);
  const Tensor fk = apply_feature_map(maps.varphi, qkv.k);
  maps_compatible(fq, fk);
  const std::int64_t n = qkv.tokens(), d = fq.dim(1), dv = qkv.value_dim();
  const Tensor kv = ops::matmul(ops::transpose(fk), qkv.v);
  std::vector<double> ksum(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t c = 0; c < d; ++c) ksum[static_cast<std::size_t>(c)] += fk[j * d + c];
  Tensor out = ops::matmul(fq, kv);
  for (std::int64_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::int64_t c = 0; c < d; ++c) den += fq[i * d + c] * ksum[static_cast<std::size_t>(c)];
    check_denominator(den, i);
    for (std::int64_t c = 0; c < dv; ++c) out[i * dv + c] /= den;
  }
  return out;
}

Tensor linear_attention_fast(const QKV& qkv, Diagnostics* diag) {
  qkv.validate();
  Tensor out({qkv.tokens(), qkv.value_dim()});
  const std::int64_t clamped =
      kernels::linear<double>(qkv.tokens(), qkv.key_dim(), qkv.value_dim(), qkv.q.ptr(),
                              qkv.k.ptr(), qkv.v.ptr(), out.ptr());
  if (diag) diag->clamped_denominators += clamped;
  return out;
}

Tensor linear_attention_pairwise(const QKV& qkv, Diagnostics* diag) {
  qkv.validate();
  const Tensor qn = ops::l2_normalize_rows(qkv.q);
  const Tensor kn = ops::l2_normalize_rows(qkv.k);
  const std::int64_t n = qkv.tokens(), d = qkv.key_dim(), dv = qkv.value_dim();
  Tensor out({n, dv});
  std::vector<double> num(static_cast<std::size_t>(dv));
  for (std::int64_t i = 0; i < n; ++i) {
    std::fill(num.begin(), num.end(), 0.0);
    double den = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      double cos = 0.0;
      for (std::int64_t c = 0; c < d; ++c) cos += qn[i * d + c] * kn[j * d + c];
      const double sim = 1.0 + cos;
      den += sim;
      for (std::int64_t c = 0; c < dv; ++c) num[static_cast<std::size_t>(c)] += sim * qkv.v[j * dv + c];
    }
    if (den < kDenominatorFloor) {
      den = kDenominatorFloor;
      if (diag) ++diag->clamped_denominators;
    }
    for (std::int64_t c = 0; c < dv; ++c) out[i * dv + c] = num[static_cast<std::size_t>(c)] / den;
  }
  return out;
}

CostReport count_cost(Kind kind, std::int64_t n, std::int64_t key_dim, std::int64_t value_dim) {
  if (n < 1 || key_dim < 1 || value_dim < 1) {
    throw ContractError("count_cost needs positive extents");
  }
  CostReport r;
  if (kind == Kind::dot_product) {
    r.flops = n * n * key_dim + n * n * value_dim + n * value_dim;
    r.weight_array_values = n * n;
    // weights plus one normalizer per row
    r.peak_intermediate_values = n * n + n;
  } else {
    r.flops = 4 * n * key_dim + 2 * n * key_dim * value_dim + n * key_dim + n * value_dim;
    r.weight_array_values = 0;
    // Qn, Kn, Kn^T V, both column sums, denominators
    r.peak_intermediate_values =
        2 * n * key_dim + key_dim * value_dim + key_dim + value_dim + n;
  }
  return r;
}

namespace kernels {

void exp_inplace(double* x, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

namespace {

constexpr float kLog2e = 1.44269504088896341f;
constexpr float kLn2Hi = 0.693359375f;
constexpr float kLn2Lo = -2.12194440e-4f;
constexpr float kExpLo = -87.0f;
constexpr float kExpHi = 88.0f;

float exp_scalar(float x) {
  const float v = std::min(std::max(x, kExpLo), kExpHi);
  const float m = std::nearbyint(v * kLog2e);
  const float r = std::fma(-m, kLn2Lo, std::fma(-m, kLn2Hi, v));
  float p = 1.0f / 5040.0f;
  p = std::fma(p, r, 1.0f / 720.0f);
  p = std::fma(p, r, 1.0f / 120.0f);
  p = std::fma(p, r, 1.0f / 24.0f);
  p = std::fma(p, r, 1.0f / 6.0f);
  p = std::fma(p, r, 0.5f);
  p = std::fma(p, r, 1.0f);
  p = std::fma(p, r, 1.0f);
  const auto bits = static_cast<std::int32_t>((static_cast<std::int32_t>(m) + 127) << 23);
  return p * std::bit_cast<float>(bits);
}

}  // namespace

void exp_inplace(float* x, std::int64_t n) {
  std::int64_t i = 0;
#if defined(__AVX512F__)
  const __m512 lo = _mm512_set1_ps(kExpLo), hi = _mm512_set1_ps(kExpHi);
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_min_ps(_mm512_max_ps(_mm512_loadu_ps(x + i), lo), hi);
    const __m512 m = _mm512_roundscale_ps(_mm512_mul_ps(v, _mm512_set1_ps(kLog2e)),
                                          _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m512 r = _mm512_fnmadd_ps(m, _mm512_set1_ps(kLn2Hi), v);
    r = _mm512_fnmadd_ps(m, _mm512_set1_ps(kLn2Lo), r);
    __m512 p = _mm512_set1_ps(1.0f / 5040.0f);
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f / 720.0f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f / 120.0f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f / 24.0f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f / 6.0f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(0.5f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f));
    p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(1.0f));
    const __m512i e =
        _mm512_slli_epi32(_mm512_add_epi32(_mm512_cvtps_epi32(m), _mm512_set1_epi32(127)), 23);
    _mm512_storeu_ps(x + i, _mm512_mul_ps(p, _mm512_castsi512_ps(e)));
  }
#endif
  for (; i < n; ++i) x[i] = exp_scalar(x[i]);
}

template <class T>
void dot_product(std::int64_t n, std::int64_t dk, std::int64_t dv, const T* q, const T* k,
                 const T* v, T* out, std::int64_t row_tile) {
  row_tile = std::max<std::int64_t>(1, std::min(row_tile, n));
  std::vector<T> kt(static_cast<std::size_t>(dk * n));
  abcnet::transpose<T>(n, dk, k, kt.data());
  std::vector<T> scores(static_cast<std::size_t>(row_tile * n));
  std::vector<T> inv(static_cast<std::size_t>(row_tile));
  for (std::int64_t r0 = 0; r0 < n; r0 += row_tile) {
    const std::int64_t tr = std::min(row_tile, n - r0);
    gemm<T>(tr, n, dk, q + r0 * dk, dk, kt.data(), n, scores.data(), n, false);
    for (std::int64_t i = 0; i < tr; ++i) {
      T* row = scores.data() + i * n;
      T mx = row[0];
      for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      for (std::int64_t j = 0; j < n; ++j) row[j] -= mx;
      exp_inplace(row, n);
      T s = 0;
      for (std::int64_t j = 0; j < n; ++j) s += row[j];
      inv[static_cast<std::size_t>(i)] = T(1) / s;
    }
    T* o = out + r0 * dv;
    gemm<T>(tr, dv, n, scores.data(), n, v, dv, o, dv, false);
    for (std::int64_t i = 0; i < tr; ++i)
      for (std::int64_t c = 0; c < dv; ++c) o[i * dv + c] *= inv[static_cast<std::size_t>(i)];
  }
}

template <class T>
std::int64_t linear(std::int64_t n, std::int64_t dk, std::int64_t dv, const T* q, const T* k,
                    const T* v, T* out) {
  std::vector<T> qn(static_cast<std::size_t>(n * dk));
  std::vector<T> kn(static_cast<std::size_t>(n * dk));
  auto normalize = [dk, n](const T* src, T* dst) {
    for (std::int64_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::int64_t c = 0; c < dk; ++c) s += src[i * dk + c] * src[i * dk + c];
      const T scale = T(1) / std::max(std::sqrt(s), T(ops::kL2Epsilon));
      for (std::int64_t c = 0; c < dk; ++c) dst[i * dk + c] = src[i * dk + c] * scale;
    }
  };
  normalize(q, qn.data());
  normalize(k, kn.data());
  std::vector<T> knt(static_cast<std::size_t>(dk * n));
  abcnet::transpose<T>(n, dk, kn.data(), knt.data());
  std::vector<T> kv(static_cast<std::size_t>(dk * dv));
  gemm<T>(dk, dv, n, knt.data(), n, v, dv, kv.data(), dv, false);
  std::vector<T> vsum(static_cast<std::size_t>(dv), T(0));
  std::vector<T> ksum(static_cast<std::size_t>(dk), T(0));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t c = 0; c < dv; ++c) vsum[static_cast<std::size_t>(c)] += v[j * dv + c];
    for (std::int64_t c = 0; c < dk; ++c) ksum[static_cast<std::size_t>(c)] += kn[static_cast<std::size_t>(j * dk + c)];
  }
  gemm<T>(n, dv, dk, qn.data(), dk, kv.data(), dv, out, dv, false);
  std::int64_t clamped = 0;
  const T floor = static_cast<T>(kDenominatorFloor);
  for (std::int64_t i = 0; i < n; ++i) {
    T den = static_cast<T>(n);
    for (std::int64_t c = 0; c < dk; ++c) den += qn[static_cast<std::size_t>(i * dk + c)] * ksum[static_cast<std::size_t>(c)];
    if (den < floor) {
      den = floor;
      ++clamped;
    }
    const T scale = T(1) / den;
    for (std::int64_t c = 0; c < dv; ++c)
      out[i * dv + c] = (out[i * dv + c] + vsum[static_cast<std::size_t>(c)]) * scale;
  }
  return clamped;
}

template void dot_product<float>(std::int64_t, std::int64_t, std::int64_t, const float*,
                                 const float*, const float*, float*, std::int64_t);
template void dot_product<double>(std::int64_t, std::int64_t, std::int64_t, const double*,
                                  const double*, const double*, double*, std::int64_t);
template std::int64_t linear<float>(std::int64_t, std::int64_t, std::int64_t, const float*,
                                    const float*, const float*, float*);
template std::int64_t linear<double>(std::int64_t, std::int64_t, std::int64_t, const double*,
                                     const double*, const double*, double*);

}  // namespace kernels

QKVVars project_qkv(Var x, Var w_q, Var w_k, Var w_v) {
  if (w_q.dim(1) != w_k.dim(1)) throw DimensionError("W_q and W_k must share D_k");
  return QKVVars{autograd::matmul(x, w_q), autograd::matmul(x, w_k), autograd::matmul(x, w_v)};
}

Var dot_product_attention(Var q, Var k, Var v) {
  const Var weights = autograd::softmax_rows(autograd::matmul(q, autograd::transpose(k)));
  return autograd::matmul(weights, v);
}

Var linear_attention(Var q, Var k, Var v, std::int64_t* clamp_count) {
  const std::int64_t n = q.dim(0);
  if (k.dim(0) != n || v.dim(0) != n || q.dim(1) != k.dim(1)) {
    throw DimensionError("linear_attention: inconsistent Q/K/V extents");
  }
  const Var qn = autograd::l2_normalize_rows(q);
  const Var kn = autograd::l2_normalize_rows(k);
  const Var kv = autograd::matmul(autograd::transpose(kn), v);
  const Var num = autograd::add_row(autograd::matmul(qn, kv), autograd::col_sum(v));
  Var den = autograd::matmul(qn, autograd::transpose(autograd::col_sum(kn)));
  den = autograd::add_scalar(den, static_cast<double>(n));
  den = autograd::clamp_min(den, kDenominatorFloor, clamp_count);
  return autograd::div_rows(num, den);
}

}  // namespace abcnet::attention
