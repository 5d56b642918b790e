// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/gemm.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <thread>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "abcnet/parallel.hpp"

namespace abcnet {

namespace {

std::atomic<int> g_threads{1};

constexpr std::int64_t kBlockK = 256;
constexpr int kRows = 8;

template <class T>
constexpr int kCols = 128 / static_cast<int>(sizeof(T));

#if defined(__AVX512F__)

template <class T>
struct Simd;

template <>
struct Simd<float> {
  using V = __m512;
  static constexpr int width = 16;
  static V load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, V v) { _mm512_storeu_ps(p, v); }
  static V splat(float s) { return _mm512_set1_ps(s); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
};

template <>
struct Simd<double> {
  using V = __m512d;
  static constexpr int width = 8;
  static V load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, V v) { _mm512_storeu_pd(p, v); }
  static V splat(double s) { return _mm512_set1_pd(s); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_pd(a, b, c); }
};

constexpr bool kVectorKernel = true;

// 8 x (2 lanes) register tile held in named accumulators.
template <class T>
inline void micro_8(std::int64_t kc, const T* __restrict A, std::int64_t lda,
                    const T* __restrict B, std::int64_t ldb, T* __restrict C, std::int64_t ldc) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr int L = S::width;
  static_assert(kCols<T> == 2 * L);
#define ABC_ROW(r) V c##r##0 = S::load(C + r * ldc), c##r##1 = S::load(C + r * ldc + L);
  ABC_ROW(0) ABC_ROW(1) ABC_ROW(2) ABC_ROW(3) ABC_ROW(4) ABC_ROW(5) ABC_ROW(6) ABC_ROW(7)
#undef ABC_ROW
  for (std::int64_t k = 0; k < kc; ++k) {
    const V b0 = S::load(B + k * ldb);
    const V b1 = S::load(B + k * ldb + L);
#define ABC_FMA(r)                         \
  {                                        \
    const V s = S::splat(A[r * lda + k]);  \
    c##r##0 = S::fma(s, b0, c##r##0);      \
    c##r##1 = S::fma(s, b1, c##r##1);      \
  }
    ABC_FMA(0) ABC_FMA(1) ABC_FMA(2) ABC_FMA(3) ABC_FMA(4) ABC_FMA(5) ABC_FMA(6) ABC_FMA(7)
#undef ABC_FMA
  }
#define ABC_STORE(r) S::store(C + r * ldc, c##r##0), S::store(C + r * ldc + L, c##r##1);
  ABC_STORE(0) ABC_STORE(1) ABC_STORE(2) ABC_STORE(3) ABC_STORE(4) ABC_STORE(5) ABC_STORE(6)
  ABC_STORE(7)
#undef ABC_STORE
}

template <class T>
inline void micro_1(std::int64_t kc, const T* __restrict A, const T* __restrict B,
                    std::int64_t ldb, T* __restrict C) {
  using S = Simd<T>;
  constexpr int L = S::width;
  auto c0 = S::load(C), c1 = S::load(C + L);
  for (std::int64_t k = 0; k < kc; ++k) {
    const auto s = S::splat(A[k]);
    c0 = S::fma(s, S::load(B + k * ldb), c0);
    c1 = S::fma(s, S::load(B + k * ldb + L), c1);
  }
  S::store(C, c0);
  S::store(C + L, c1);
}

#else

constexpr bool kVectorKernel = false;

#endif

template <class T>
inline void micro_edge(std::int64_t mr, std::int64_t nr, std::int64_t kc, const T* A,
                       std::int64_t lda, const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
  for (std::int64_t r = 0; r < mr; ++r) {
    T* c = C + r * ldc;
    const T* a = A + r * lda;
    for (std::int64_t k = 0; k < kc; ++k) {
      const T av = a[k];
      const T* b = B + k * ldb;
      for (std::int64_t w = 0; w < nr; ++w) c[w] += av * b[w];
    }
  }
}

template <class T>
void gemm_columns(std::int64_t M, std::int64_t j0, std::int64_t j1, std::int64_t K, const T* A,
                  std::int64_t lda, const T* B, std::int64_t ldb, T* C, std::int64_t ldc) {
  constexpr int NR = kCols<T>;
  // B panels are packed contiguously so the micro-kernel streams one buffer
  // regardless of ldb.
  std::vector<T> packed(static_cast<std::size_t>(kBlockK * NR));
  for (std::int64_t k0 = 0; k0 < K; k0 += kBlockK) {
    const std::int64_t kc = std::min(kBlockK, K - k0);
    for (std::int64_t jb = j0; jb < j1; jb += NR) {
      const std::int64_t nr = std::min<std::int64_t>(NR, j1 - jb);
      if (kVectorKernel && nr == NR) {
#if defined(__AVX512F__)
        for (std::int64_t k = 0; k < kc; ++k) {
          std::memcpy(packed.data() + k * NR, B + (k0 + k) * ldb + jb, sizeof(T) * NR);
        }
        std::int64_t i = 0;
        for (; i + kRows <= M; i += kRows) {
          micro_8<T>(kc, A + i * lda + k0, lda, packed.data(), NR, C + i * ldc + jb, ldc);
        }
        for (; i < M; ++i) {
          micro_1<T>(kc, A + i * lda + k0, packed.data(), NR, C + i * ldc + jb);
        }
#endif
      } else {
        micro_edge(M, nr, kc, A + k0, lda, B + k0 * ldb + jb, ldb, C + jb, ldc);
      }
    }
  }
}

}  // namespace

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn,
                  std::int64_t min_chunk) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const std::int64_t workers =
      std::min<std::int64_t>(num_threads(), std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::int64_t step = (n + workers - 1) / workers;
  for (std::int64_t w = 1; w < workers; ++w) {
    const std::int64_t lo = begin + w * step;
    const std::int64_t hi = std::min(end, lo + step);
    if (lo < hi) pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(begin, std::min(end, begin + step));
  for (auto& t : pool) t.join();
}

template <class T>
void gemm(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t lda,
          const T* B, std::int64_t ldb, T* C, std::int64_t ldc, bool accumulate) {
  if (M <= 0 || N <= 0) return;
  if (!accumulate) {
    for (std::int64_t i = 0; i < M; ++i) std::memset(C + i * ldc, 0, sizeof(T) * N);
  }
  if (K <= 0) return;
  constexpr int NR = kCols<T>;
  // Column panels are independent, so a split over them keeps every
  // element's accumulation order fixed.
  const std::int64_t panels = (N + NR - 1) / NR;
  parallel_for(
      0, panels,
      [&](std::int64_t p0, std::int64_t p1) {
        gemm_columns<T>(M, p0 * NR, std::min(N, p1 * NR), K, A, lda, B, ldb, C, ldc);
      },
      std::max<std::int64_t>(1, 4096 / std::max<std::int64_t>(1, M * K / 64 + 1)));
}

template <class T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst) {
  constexpr std::int64_t tile = 32;
  for (std::int64_t i0 = 0; i0 < rows; i0 += tile) {
    const std::int64_t i1 = std::min(rows, i0 + tile);
    for (std::int64_t j0 = 0; j0 < cols; j0 += tile) {
      const std::int64_t j1 = std::min(cols, j0 + tile);
      for (std::int64_t i = i0; i < i1; ++i)
        for (std::int64_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

template void gemm<float>(std::int64_t, std::int64_t, std::int64_t, const float*, std::int64_t,
                          const float*, std::int64_t, float*, std::int64_t, bool);
template void gemm<double>(std::int64_t, std::int64_t, std::int64_t, const double*, std::int64_t,
                           const double*, std::int64_t, double*, std::int64_t, bool);
template void transpose<float>(std::int64_t, std::int64_t, const float*, float*);
template void transpose<double>(std::int64_t, std::int64_t, const double*, double*);

}  // namespace abcnet
