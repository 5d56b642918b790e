// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abcnet/attention.hpp"
#include "abcnet/model.hpp"

namespace abcnet::bench {

/// Median of the samples (mean of the middle two for even counts).
double median(std::vector<double> samples);

/// Least-squares slope of log(y) against log(x). Needs two distinct x values.
std::optional<double> fit_loglog_slope(std::span<const double> x, std::span<const double> y);

struct BenchRecord {
  attention::Kind kernel = attention::Kind::dot_product;
  std::int64_t n = 0;
  std::int64_t key_dim = 0;
  std::int64_t value_dim = 0;
  std::int64_t flops = 0;
  std::int64_t peak_intermediates = 0;
  /// Median seconds per kernel call.
  double wall_seconds = 0.0;
  std::int64_t repetitions = 0;
  /// Set instead of a timing when the run would not fit in memory.
  bool skipped = false;
  std::string note;
};

struct AttentionBenchOptions {
  std::vector<std::int64_t> sizes{1024, 2048, 4096, 8192, 16384, 32768, 65536};
  std::int64_t key_dim = 32;
  std::int64_t value_dim = 64;
  std::int64_t repetitions = 5;
  std::vector<attention::Kind> kinds{attention::Kind::dot_product, attention::Kind::linear};
  /// Working-set ceiling for one kernel call.
  std::size_t memory_budget = std::size_t{2} << 30;
  /// Short kernels are looped so each timed repetition lasts at least this long.
  double min_rep_seconds = 0.02;
  std::uint64_t seed = 1;
};

/// Times the float32 raw kernels single-threaded: one discarded warm-up call,
/// then the median over `repetitions`. Requires ascending sizes.
std::vector<BenchRecord> bench_attention(const AttentionBenchOptions& options);

struct SlopeFit {
  attention::Kind kernel;
  double slope = 0.0;
  std::int64_t points = 0;
};

/// One fit per kernel over its non-skipped records; kernels with fewer than
/// two sizes are left out.
std::vector<SlopeFit> attention_slopes(const std::vector<BenchRecord>& records);

/// Columns: record,kernel,n,key_dim,value_dim,flops,peak_intermediates,
/// peak_bytes,wall_seconds,repetitions,slope,note. `record` is measure, skip or
/// slope; slope rows leave the per-size columns empty.
std::string attention_csv_header();
std::string attention_csv(const std::vector<BenchRecord>& records, const std::vector<SlopeFit>& slopes,
                          bool header = true);

struct FpsRecord {
  std::int64_t resolution = 0;
  double seconds_per_frame = 0.0;
  double fps = 0.0;
  std::int64_t repetitions = 0;
  /// Multiply-accumulates of one inference forward.
  std::int64_t macs = 0;
  std::int64_t parameters = 0;
  bool skipped = false;
  std::string note;
};

struct FpsBenchOptions {
  model::ABCNetConfig config = model::ABCNetConfig::full();
  std::vector<std::int64_t> resolutions{256, 512, 1024};
  std::int64_t repetitions = 5;
  std::size_t memory_budget = std::size_t{3} << 30;
  std::uint64_t seed = 1;
};

/// Inference forward of one 3-channel frame per resolution. Resolutions
/// whose extrapolated footprint exceeds the budget become skip rows.
std::vector<FpsRecord> bench_fps(const FpsBenchOptions& options);

/// Columns: resolution,seconds_per_frame,fps,repetitions,macs,parameters,status,note.
std::string fps_csv_header();
std::string fps_csv(const std::vector<FpsRecord>& records, bool header = true);

}  // namespace abcnet::bench
