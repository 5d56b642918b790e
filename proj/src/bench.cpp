// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <new>

#include "abcnet/csv.hpp"
#include "abcnet/parallel.hpp"

namespace abcnet::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class ThreadScope {
 public:
  explicit ThreadScope(int n) : saved_(num_threads()) { set_num_threads(n); }
  ~ThreadScope() { set_num_threads(saved_); }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int saved_;
};

constexpr std::int64_t kRowTile = 64;

// Floats alive during one call: inputs, output, plus the kernel's scratch.
std::int64_t working_set(attention::Kind kind, std::int64_t n, std::int64_t dk, std::int64_t dv) {
  const std::int64_t io = n * (2 * dk + 2 * dv);
  if (kind == attention::Kind::dot_product) return io + n * dk + kRowTile * n;
  return io + 2 * n * dk + dk * dv + dk + dv;
}

}  // namespace

double median(std::vector<double> samples) {
  if (samples.empty()) throw ContractError("median of no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  return samples.size() % 2 == 1 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
}

std::optional<double> fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("slope fit: x and y lengths differ");
  if (x.size() < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw ContractError("slope fit needs positive samples");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) return std::nullopt;
  return sxy / sxx;
}

std::vector<BenchRecord> bench_attention(const AttentionBenchOptions& o) {
  if (o.repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");
  if (o.key_dim < 1 || o.value_dim < 1) throw ConfigError("bench: dimensions must be >= 1");
  for (std::size_t i = 0; i < o.sizes.size(); ++i) {
    if (o.sizes[i] < 1) throw ConfigError("bench: sizes must be positive");
    if (i > 0 && o.sizes[i] <= o.sizes[i - 1]) throw ConfigError("bench: sizes must be ascending");
  }
  ThreadScope single(1);
  std::vector<BenchRecord> out;
  for (attention::Kind kind : o.kinds) {
    for (std::int64_t n : o.sizes) {
      const attention::CostReport cost = attention::count_cost(kind, n, o.key_dim, o.value_dim);
      BenchRecord rec;
      rec.kernel = kind;
      rec.n = n;
      rec.key_dim = o.key_dim;
      rec.value_dim = o.value_dim;
      rec.flops = cost.flops;
      rec.peak_intermediates = cost.peak_intermediate_values;
      const auto bytes = static_cast<std::size_t>(working_set(kind, n, o.key_dim, o.value_dim)) * sizeof(float);
      if (bytes > o.memory_budget) {
        rec.skipped = true;
        rec.note = "out of memory: needs " + std::to_string(bytes) + " bytes";
        out.push_back(rec);
        continue;
      }
      try {
        Rng rng(o.seed ^ static_cast<std::uint64_t>(n));
        auto fill = [&](std::int64_t count) {
          std::vector<float> v(static_cast<std::size_t>(count));
          for (float& e : v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
          return v;
        };
        const auto q = fill(n * o.key_dim);
        const auto k = fill(n * o.key_dim);
        const auto v = fill(n * o.value_dim);
        std::vector<float> res(static_cast<std::size_t>(n * o.value_dim));
        auto call = [&] {
          if (kind == attention::Kind::dot_product) {
            attention::kernels::dot_product<float>(n, o.key_dim, o.value_dim, q.data(), k.data(),
                                                   v.data(), res.data(), kRowTile);
          } else {
            attention::kernels::linear<float>(n, o.key_dim, o.value_dim, q.data(), k.data(), v.data(),
                                              res.data());
          }
        };
        const auto t0 = Clock::now();
        call();
        const double warm = std::max(seconds_since(t0), 1e-9);
        const auto inner = static_cast<std::int64_t>(std::max(1.0, std::ceil(o.min_rep_seconds / warm)));
        std::vector<double> samples;
        for (std::int64_t r = 0; r < o.repetitions; ++r) {
          const auto t = Clock::now();
          for (std::int64_t i = 0; i < inner; ++i) call();
          samples.push_back(seconds_since(t) / static_cast<double>(inner));
        }
        rec.wall_seconds = median(std::move(samples));
        rec.repetitions = o.repetitions;
        if (inner > 1) rec.note = std::to_string(inner) + " calls per repetition";
      } catch (const std::bad_alloc&) {
        rec.skipped = true;
        rec.note = "out of memory: allocation failed";
      }
      out.push_back(rec);
    }
  }
  return out;
}

std::vector<SlopeFit> attention_slopes(const std::vector<BenchRecord>& records) {
  std::vector<SlopeFit> fits;
  for (attention::Kind kind : {attention::Kind::dot_product, attention::Kind::linear}) {
    std::vector<double> x, y;
    for (const BenchRecord& r : records) {
      if (r.kernel != kind || r.skipped) continue;
      x.push_back(static_cast<double>(r.n));
      y.push_back(r.wall_seconds);
    }
    if (const auto s = fit_loglog_slope(x, y)) {
      fits.push_back({kind, *s, static_cast<std::int64_t>(x.size())});
    }
  }
  return fits;
}

std::string attention_csv_header() {
  return csv::row({"record", "kernel", "n", "key_dim", "value_dim", "flops", "peak_intermediates",
                   "peak_bytes", "wall_seconds", "repetitions", "slope", "note"});
}

std::string attention_csv(const std::vector<BenchRecord>& records, const std::vector<SlopeFit>& slopes,
                          bool header) {
  std::string out = header ? attention_csv_header() : std::string();
  for (const BenchRecord& r : records) {
    const std::int64_t peak_bytes = r.peak_intermediates * static_cast<std::int64_t>(sizeof(float));
    out += csv::row({r.skipped ? "skip" : "measure", std::string(attention::kind_name(r.kernel)),
                     csv::number(r.n), csv::number(r.key_dim), csv::number(r.value_dim),
                     csv::number(r.flops), csv::number(r.peak_intermediates), csv::number(peak_bytes),
                     r.skipped ? "" : csv::number(r.wall_seconds),
                     r.skipped ? "" : csv::number(r.repetitions), "", r.note});
  }
  for (const SlopeFit& s : slopes) {
    out += csv::row({"slope", std::string(attention::kind_name(s.kernel)), "", "", "", "", "", "", "", "",
                     csv::number(s.slope), std::to_string(s.points) + " sizes"});
  }
  return out;
}

std::vector<FpsRecord> bench_fps(const FpsBenchOptions& o) {
  if (o.repetitions < 1) throw ConfigError("bench-fps: repetitions must be >= 1");
  model::ABCNetConfig cfg = o.config;
  cfg.training_mode = false;
  cfg.validate();
  model::NetworkWeights weights = model::NetworkWeights::init(cfg, o.seed);
  const std::int64_t params = model::count_parameters(weights).inference_total;

  auto forward = [&](std::int64_t res, std::size_t budget, std::size_t* held, std::int64_t* macs) {
    Rng rng(o.seed + static_cast<std::uint64_t>(res));
    Graph g(false);
    g.set_memory_budget(budget);
    model::Context ctx(g, weights, ops::BatchNormMode::infer);
    const Var x = g.constant(random_uniform({1, cfg.in_channels, res, res}, rng));
    model::abcnet_forward(ctx, x, cfg);
    if (held) *held = g.bytes_held();
    if (macs) *macs = g.macs();
  };

  // Footprint grows with the pixel count; probe once at a small extent.
  constexpr std::int64_t kProbe = 64;
  std::size_t probe_bytes = 0;
  forward(kProbe, 0, &probe_bytes, nullptr);

  std::vector<FpsRecord> out;
  for (std::int64_t res : o.resolutions) {
    FpsRecord rec;
    rec.resolution = res;
    rec.parameters = params;
    if (res <= 0 || res % 32 != 0) throw ConfigError("bench-fps: resolution " + std::to_string(res) +
                                                     " is not a positive multiple of 32");
    const double scale = static_cast<double>(res * res) / static_cast<double>(kProbe * kProbe);
    // Convolution scratch is not charged to the graph; allow half again.
    const double estimate = 1.5 * static_cast<double>(probe_bytes) * scale;
    if (estimate > static_cast<double>(o.memory_budget)) {
      rec.skipped = true;
      rec.note = "out of memory: estimated " + std::to_string(static_cast<std::int64_t>(estimate)) + " bytes";
      out.push_back(rec);
      continue;
    }
    try {
      forward(res, o.memory_budget, nullptr, &rec.macs);
      std::vector<double> samples;
      for (std::int64_t r = 0; r < o.repetitions; ++r) {
        const auto t = Clock::now();
        forward(res, o.memory_budget, nullptr, nullptr);
        samples.push_back(seconds_since(t));
      }
      rec.seconds_per_frame = median(std::move(samples));
      rec.fps = 1.0 / rec.seconds_per_frame;
      rec.repetitions = o.repetitions;
    } catch (const ResourceError& e) {
      rec.skipped = true;
      rec.note = std::string("out of memory: ") + e.what();
    } catch (const std::bad_alloc&) {
      rec.skipped = true;
      rec.note = "out of memory: allocation failed";
    }
    out.push_back(rec);
  }
  return out;
}

std::string fps_csv_header() {
  return csv::row({"resolution", "seconds_per_frame", "fps", "repetitions", "macs", "parameters", "status",
                   "note"});
}

std::string fps_csv(const std::vector<FpsRecord>& records, bool header) {
  std::string out = header ? fps_csv_header() : std::string();
  for (const FpsRecord& r : records) {
    out += csv::row({csv::number(r.resolution), r.skipped ? "" : csv::number(r.seconds_per_frame),
                     r.skipped ? "" : csv::number(r.fps), r.skipped ? "" : csv::number(r.repetitions),
                     r.skipped ? "" : csv::number(r.macs), csv::number(r.parameters),
                     r.skipped ? "skip" : "ok", r.note});
  }
  return out;
}

}  // namespace abcnet::bench
