// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "abcnet/gemm.hpp"

namespace abcnet::ops {

namespace {

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

ConvSpec ConvSpec::square(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                          bool bias) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {k, k};
  s.stride = {stride, stride};
  s.padding = {k / 2, k / 2};
  s.bias = bias;
  return s;
}

Extent2 ConvSpec::output_extent(Extent2 in) const {
  const auto axis = [](std::int64_t n, std::int64_t k, std::int64_t s, std::int64_t p) {
    const std::int64_t span = n + 2 * p - k;
    if (span < 0 || s < 1) return std::int64_t{0};
    return span / s + 1;
  };
  Extent2 out{axis(in.h, kernel.h, stride.h, padding.h), axis(in.w, kernel.w, stride.w, padding.w)};
  if (out.h < 1 || out.w < 1) {
    throw DimensionError("convolution output extent < 1 for input " + std::to_string(in.h) + "x" +
                         std::to_string(in.w));
  }
  return out;
}

std::int64_t ConvSpec::parameter_count() const {
  return out_channels * in_channels * kernel.h * kernel.w + (bias ? out_channels : 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  gemm<double>(m, n, k, a.ptr(), k, b.ptr(), n, c.ptr(), n, false);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  abcnet::transpose<double>(a.dim(0), a.dim(1), a.ptr(), t.ptr());
  return t;
}

namespace {

struct ConvGeometry {
  std::int64_t batch, channels;
  Extent2 in, out;
};

ConvGeometry check_conv(const Tensor& x, const Tensor& w, const Tensor* bias,
                        const ConvSpec& spec) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (w.shape() != spec.weight_shape()) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " does not match spec " +
                         shape_str(spec.weight_shape()));
  }
  if (x.dim(1) != spec.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, spec " +
                         std::to_string(spec.in_channels));
  }
  if (spec.bias && (bias == nullptr || bias->numel() != spec.out_channels)) {
    throw DimensionError("conv2d: bias missing or wrong length");
  }
  ConvGeometry g{x.dim(0), x.dim(1), {x.dim(2), x.dim(3)}, {}};
  g.out = spec.output_extent(g.in);
  return g;
}

}  // namespace

Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec) {
  const auto g = check_conv(x, w, bias, spec);
  Tensor y({g.batch, spec.out_channels, g.out.h, g.out.w});
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t o = 0; o < spec.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < g.out.h; ++oy) {
        for (std::int64_t ox = 0; ox < g.out.w; ++ox) {
          double acc = spec.bias ? (*bias)[o] : 0.0;
          for (std::int64_t c = 0; c < g.channels; ++c) {
            for (std::int64_t ki = 0; ki < spec.kernel.h; ++ki) {
              const std::int64_t iy = oy * spec.stride.h - spec.padding.h + ki;
              if (iy < 0 || iy >= g.in.h) continue;
              for (std::int64_t kj = 0; kj < spec.kernel.w; ++kj) {
                const std::int64_t ix = ox * spec.stride.w - spec.padding.w + kj;
                if (ix < 0 || ix >= g.in.w) continue;
                acc += w.at(o, c, ki, kj) * x.at(b, c, iy, ix);
              }
            }
          }
          y.at(b, o, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

void im2col(const double* x, std::int64_t channels, Extent2 in, const ConvSpec& spec, Extent2 out,
            double* cols) {
  const std::int64_t plane = out.h * out.w;
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* xc = x + c * in.h * in.w;
    for (std::int64_t ki = 0; ki < spec.kernel.h; ++ki) {
      for (std::int64_t kj = 0; kj < spec.kernel.w; ++kj) {
        double* row = cols + ((c * spec.kernel.h + ki) * spec.kernel.w + kj) * plane;
        for (std::int64_t oy = 0; oy < out.h; ++oy) {
          const std::int64_t iy = oy * spec.stride.h - spec.padding.h + ki;
          double* dst = row + oy * out.w;
          if (iy < 0 || iy >= in.h) {
            std::fill(dst, dst + out.w, 0.0);
            continue;
          }
          const double* src = xc + iy * in.w;
          for (std::int64_t ox = 0; ox < out.w; ++ox) {
            const std::int64_t ix = ox * spec.stride.w - spec.padding.w + kj;
            dst[ox] = (ix >= 0 && ix < in.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::int64_t channels, Extent2 in, const ConvSpec& spec,
            Extent2 out, double* dx) {
  const std::int64_t plane = out.h * out.w;
  for (std::int64_t c = 0; c < channels; ++c) {
    double* xc = dx + c * in.h * in.w;
    for (std::int64_t ki = 0; ki < spec.kernel.h; ++ki) {
      for (std::int64_t kj = 0; kj < spec.kernel.w; ++kj) {
        const double* row = cols + ((c * spec.kernel.h + ki) * spec.kernel.w + kj) * plane;
        for (std::int64_t oy = 0; oy < out.h; ++oy) {
          const std::int64_t iy = oy * spec.stride.h - spec.padding.h + ki;
          if (iy < 0 || iy >= in.h) continue;
          const double* src = row + oy * out.w;
          double* dst = xc + iy * in.w;
          for (std::int64_t ox = 0; ox < out.w; ++ox) {
            const std::int64_t ix = ox * spec.stride.w - spec.padding.w + kj;
            if (ix >= 0 && ix < in.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& spec) {
  const auto g = check_conv(x, w, bias, spec);
  const std::int64_t patch = spec.in_channels * spec.kernel.h * spec.kernel.w;
  const std::int64_t plane = g.out.h * g.out.w;
  Tensor y({g.batch, spec.out_channels, g.out.h, g.out.w});
  const bool pointwise = spec.kernel == Extent2{1, 1} && spec.stride == Extent2{1, 1} &&
                         spec.padding == Extent2{0, 0};
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(patch * plane));
  for (std::int64_t b = 0; b < g.batch; ++b) {
    const double* xb = x.ptr() + b * g.channels * g.in.h * g.in.w;
    const double* src = xb;
    if (!pointwise) {
      im2col(xb, g.channels, g.in, spec, g.out, cols.data());
      src = cols.data();
    }
    double* yb = y.ptr() + b * spec.out_channels * plane;
    gemm<double>(spec.out_channels, plane, patch, w.ptr(), patch, src, plane, yb, plane, false);
    if (spec.bias) {
      for (std::int64_t o = 0; o < spec.out_channels; ++o) {
        const double bv = (*bias)[o];
        for (std::int64_t p = 0; p < plane; ++p) yb[o * plane + p] += bv;
      }
    }
  }
  return y;
}

BatchNormStats BatchNormStats::fresh(std::int64_t channels) {
  BatchNormStats s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::ones({channels});
  return s;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BatchNormMode mode) {
  require_rank(x, 4, "batchnorm2d");
  const std::int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || stats.running_mean.numel() != C ||
      stats.running_var.numel() != C) {
    throw DimensionError("batchnorm2d: affine/stat length must equal channel extent " +
                         std::to_string(C));
  }
  Tensor y(x.shape());
  const double count = static_cast<double>(B * plane);
  for (std::int64_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == BatchNormMode::train) {
      double s = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const double* p = x.ptr() + (b * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / count;
      double sq = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const double* p = x.ptr() + (b * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      stats.running_mean[c] = (1 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean;
      stats.running_var[c] = (1 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double scale = gamma[c] / std::sqrt(var + stats.epsilon);
    const double shift = beta[c] - mean * scale;
    for (std::int64_t b = 0; b < B; ++b) {
      const double* p = x.ptr() + (b * C + c) * plane;
      double* q = y.ptr() + (b * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
    }
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::int64_t n = x.dim(0), m = x.dim(1);
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* r = x.ptr() + i * m;
    double* o = y.ptr() + i * m;
    const double mx = *std::max_element(r, r + m);
    double s = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      o[j] = std::exp(r[j] - mx);
      s += o[j];
    }
    const double inv = 1.0 / s;
    for (std::int64_t j = 0; j < m; ++j) o[j] *= inv;
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* r = x.ptr() + i * d;
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) sq += r[j] * r[j];
    const double inv = 1.0 / std::max(std::sqrt(sq), kL2Epsilon);
    for (std::int64_t j = 0; j < d; ++j) y.ptr()[i * d + j] = r[j] * inv;
  }
  return y;
}

namespace detail {

std::vector<LinearTap> linear_taps(std::int64_t in, std::int64_t out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace detail

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  require_rank(x, 4, "bilinear_resize");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == H && out_w == W) return x;
  const auto ty = detail::linear_taps(H, out_h);
  const auto tx = detail::linear_taps(W, out_w);
  Tensor y({B, C, out_h, out_w});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.ptr() + bc * H * W;
    double* dst = y.ptr() + bc * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const double* r0 = src + a.i0 * W;
      const double* r1 = src + a.i1 * W;
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        dst[oy * out_w + ox] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                               a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  return y;
}

Tensor bilinear_upsample(const Tensor& x, std::int64_t scale) {
  if (scale < 1) throw ContractError("bilinear_upsample: scale must be >= 1");
  require_rank(x, 4, "bilinear_upsample");
  return bilinear_resize(x, x.dim(2) * scale, x.dim(3) * scale);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: batch/spatial extents differ " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor y({B, Ca + Cb, a.dim(2), a.dim(3)});
  for (std::int64_t n = 0; n < B; ++n) {
    std::copy_n(a.ptr() + n * Ca * plane, Ca * plane, y.ptr() + n * (Ca + Cb) * plane);
    std::copy_n(b.ptr() + n * Cb * plane, Cb * plane, y.ptr() + (n * (Ca + Cb) + Ca) * plane);
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add: extents differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor y(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({B, C, 1, 1});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) s += x[bc * plane + i];
    y[bc] = s / static_cast<double>(plane);
  }
  return y;
}

Tensor max_pool2d(const Tensor& x, std::int64_t kernel, std::int64_t stride,
                  std::int64_t padding) {
  require_rank(x, 4, "max_pool2d");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Ho = (H + 2 * padding - kernel) / stride + 1;
  const std::int64_t Wo = (W + 2 * padding - kernel) / stride + 1;
  if (Ho < 1 || Wo < 1) throw DimensionError("max_pool2d: output extent < 1");
  Tensor y({B, C, Ho, Wo});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.ptr() + bc * H * W;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::int64_t ki = 0; ki < kernel; ++ki) {
          const std::int64_t iy = oy * stride - padding + ki;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kj = 0; kj < kernel; ++kj) {
            const std::int64_t ix = ox * stride - padding + kj;
            if (ix < 0 || ix >= W) continue;
            best = std::max(best, src[iy * W + ix]);
          }
        }
        y[(bc * Ho + oy) * Wo + ox] = best;
      }
    }
  }
  return y;
}

Tensor softmax_channels(const Tensor& logits) {
  require_rank(logits, 4, "softmax_channels");
  const std::int64_t B = logits.dim(0), K = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  Tensor p(logits.shape());
  for (std::int64_t b = 0; b < B; ++b) {
    const double* l = logits.ptr() + b * K * plane;
    double* o = p.ptr() + b * K * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      double mx = l[i];
      for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, l[k * plane + i]);
      double s = 0.0;
      for (std::int64_t k = 0; k < K; ++k) {
        o[k * plane + i] = std::exp(l[k * plane + i] - mx);
        s += o[k * plane + i];
      }
      for (std::int64_t k = 0; k < K; ++k) o[k * plane + i] /= s;
    }
  }
  return p;
}

Tensor feature_to_rows(const Tensor& x, std::int64_t batch_index) {
  require_rank(x, 4, "feature_to_rows");
  const std::int64_t C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (batch_index < 0 || batch_index >= x.dim(0)) throw DimensionError("batch index out of range");
  Tensor rows({plane, C});
  abcnet::transpose<double>(C, plane, x.ptr() + batch_index * C * plane, rows.ptr());
  return rows;
}

Tensor rows_to_feature(const Tensor& rows, std::int64_t height, std::int64_t width) {
  require_rank(rows, 2, "rows_to_feature");
  if (rows.dim(0) != height * width) throw DimensionError("rows_to_feature: row count != H*W");
  const std::int64_t C = rows.dim(1);
  Tensor x({1, C, height, width});
  abcnet::transpose<double>(height * width, C, rows.ptr(), x.ptr());
  return x;
}

}  // namespace abcnet::ops
