// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace abcnet {

/// Worker count used by data-parallel fast paths. 1 means strictly serial.
/// Results do not depend on this value: work is split into fixed,
/// non-overlapping output ranges, so each element is reduced in the same order.
void set_num_threads(int n);
int num_threads();

/// Runs fn(lo, hi) over a static partition of [begin, end).
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn,
                  std::int64_t min_chunk = 1);

}  // namespace abcnet
