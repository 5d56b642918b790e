// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace abcnet {

/// C[M x N] (+)= A[M x K] * B[K x N], all row-major with explicit leading
/// dimensions. Register-blocked; instantiated for float and double.
template <class T>
void gemm(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, std::int64_t lda,
          const T* B, std::int64_t ldb, T* C, std::int64_t ldc, bool accumulate);

/// Out-of-place transpose of a rows x cols row-major matrix.
template <class T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst);

}  // namespace abcnet
