// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "abcnet/gemm.hpp"

namespace abcnet {

const Tensor& Var::value() const {
  if (!valid()) throw ContractError("use of an unbound Var");
  return graph->value(*this);
}

Var Graph::push(Node node) {
  charge(node.external ? Tensor() : node.value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::charge(const Tensor& t) {
  const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(double);
  if (budget_ != 0 && bytes_ + bytes > budget_) {
    throw ResourceError("graph memory budget exceeded (" + std::to_string(bytes_ + bytes) +
                        " > " + std::to_string(budget_) + " bytes)");
  }
  bytes_ += bytes;
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::leaf(Tensor value) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Graph::parameter(std::string name, const Tensor& storage) {
  Node n;
  n.op = "parameter";
  n.external = &storage;
  n.requires_grad = grad_enabled_;
  n.param_name = std::move(name);
  return push(std::move(n));
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Graph::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Graph::grad(Var v) const {
  node(v);
  const auto idx = static_cast<std::size_t>(v.id);
  if (idx < grads_.size() && !grads_[idx].empty()) return grads_[idx];
  return Tensor::zeros(value(v).shape());
}

void Graph::backward(Var loss) {
  const Node& ln = node(loss);
  const Tensor& lv = ln.external ? *ln.external : ln.value;
  if (lv.numel() != 1) {
    throw ContractError("backward requires a single-element loss, got " + shape_str(lv.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[static_cast<std::size_t>(loss.id)] = Tensor::ones(lv.shape());
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty() || !n.requires_grad || !n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (int in : n.inputs) {
      Node& src = nodes_[static_cast<std::size_t>(in)];
      const Tensor& val = src.external ? *src.external : src.value;
      in_values.push_back(&val);
      if (src.requires_grad) {
        Tensor& acc = grads_[static_cast<std::size_t>(in)];
        if (acc.empty()) acc = Tensor::zeros(val.shape());
        in_grads.push_back(&acc);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(BackwardArgs{g, n.external ? *n.external : n.value, in_values, in_grads});
  }
}

std::vector<Graph::ParameterGrad> Graph::parameter_grads() const {
  std::vector<ParameterGrad> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param_name.empty()) continue;
    Tensor g = (i < grads_.size() && !grads_[i].empty()) ? grads_[i]
                                                         : Tensor::zeros(nodes_[i].external->shape());
    out.push_back({nodes_[i].param_name, std::move(g)});
  }
  return out;
}

namespace autograd {

namespace {

Graph& graph_of(std::initializer_list<Var> vars) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) continue;
    if (g == nullptr) g = v.graph;
    if (v.graph != g) throw ContractError("operands belong to different graphs");
  }
  if (g == nullptr) throw ContractError("operator called without a bound Var");
  return *g;
}

void axpy(Tensor& dst, const Tensor& src, double a = 1.0) {
  for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += a * src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of({a, b});
  Tensor out = ops::matmul(a.value(), b.value());
  const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  g.add_macs(M * K * N);
  return g.record("matmul", std::move(out), {a, b}, [M, K, N](const BackwardArgs& args) {
    const Tensor& A = *args.inputs[0];
    const Tensor& B = *args.inputs[1];
    if (Tensor* dA = args.grads[0]) {
      std::vector<double> bt(static_cast<std::size_t>(K * N));
      abcnet::transpose<double>(K, N, B.ptr(), bt.data());
      gemm<double>(M, K, N, args.out_grad.ptr(), N, bt.data(), K, dA->ptr(), K, true);
    }
    if (Tensor* dB = args.grads[1]) {
      std::vector<double> at(static_cast<std::size_t>(M * K));
      abcnet::transpose<double>(M, K, A.ptr(), at.data());
      gemm<double>(K, N, M, at.data(), M, args.out_grad.ptr(), N, dB->ptr(), N, true);
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of({a});
  return g.record("transpose", ops::transpose(a.value()), {a}, [](const BackwardArgs& args) {
    if (Tensor* da = args.grads[0]) axpy(*da, ops::transpose(args.out_grad));
  });
}

Var conv2d(Var x, Var w, Var bias, const ops::ConvSpec& spec) {
  Graph& g = graph_of({x, w, bias});
  if (spec.bias != bias.valid()) throw ContractError("conv2d: bias Var must match spec.bias");
  const Tensor* bptr = bias.valid() ? &bias.value() : nullptr;
  Tensor out = ops::conv2d(x.value(), w.value(), bptr, spec);
  const std::int64_t B = x.dim(0);
  const ops::Extent2 in{x.dim(2), x.dim(3)};
  const ops::Extent2 o{out.dim(2), out.dim(3)};
  const std::int64_t patch = spec.in_channels * spec.kernel.h * spec.kernel.w;
  const std::int64_t plane = o.h * o.w;
  g.add_macs(B * spec.out_channels * plane * patch);
  std::vector<Var> inputs{x, w};
  if (bias.valid()) inputs.push_back(bias);
  return g.record("conv2d", std::move(out), inputs, [=](const BackwardArgs& args) {
    const Tensor& X = *args.inputs[0];
    const Tensor& W = *args.inputs[1];
    Tensor* dX = args.grads[0];
    Tensor* dW = args.grads[1];
    Tensor* db = args.inputs.size() > 2 ? args.grads[2] : nullptr;
    const bool pointwise = spec.kernel == ops::Extent2{1, 1} &&
                           spec.stride == ops::Extent2{1, 1} &&
                           spec.padding == ops::Extent2{0, 0};
    const std::int64_t in_plane = in.h * in.w;
    std::vector<double> cols(static_cast<std::size_t>(patch * plane));
    std::vector<double> cols_t(dW ? static_cast<std::size_t>(patch * plane) : 0);
    std::vector<double> wt;
    if (dX) {
      wt.resize(static_cast<std::size_t>(patch * spec.out_channels));
      abcnet::transpose<double>(spec.out_channels, patch, W.ptr(), wt.data());
    }
    for (std::int64_t b = 0; b < B; ++b) {
      const double* dy = args.out_grad.ptr() + b * spec.out_channels * plane;
      const double* xb = X.ptr() + b * spec.in_channels * in_plane;
      if (dW) {
        const double* src = xb;
        if (!pointwise) {
          ops::im2col(xb, spec.in_channels, in, spec, o, cols.data());
          src = cols.data();
        }
        abcnet::transpose<double>(patch, plane, src, cols_t.data());
        gemm<double>(spec.out_channels, patch, plane, dy, plane, cols_t.data(), patch, dW->ptr(),
                     patch, true);
      }
      if (dX) {
        double* dxb = dX->ptr() + b * spec.in_channels * in_plane;
        if (pointwise) {
          gemm<double>(patch, plane, spec.out_channels, wt.data(), spec.out_channels, dy, plane,
                       dxb, plane, true);
        } else {
          gemm<double>(patch, plane, spec.out_channels, wt.data(), spec.out_channels, dy, plane,
                       cols.data(), plane, false);
          ops::col2im(cols.data(), spec.in_channels, in, spec, o, dxb);
        }
      }
      if (db) {
        for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
          double s = 0.0;
          for (std::int64_t p = 0; p < plane; ++p) s += dy[oc * plane + p];
          (*db)[oc] += s;
        }
      }
    }
  });
}

Var batchnorm2d(Var x, Var gamma, Var beta, ops::BatchNormStats& stats, ops::BatchNormMode mode) {
  Graph& g = graph_of({x, gamma, beta});
  Tensor out = ops::batchnorm2d(x.value(), gamma.value(), beta.value(), stats, mode);
  const double eps = stats.epsilon;
  Tensor frozen_mean, frozen_var;
  if (mode == ops::BatchNormMode::infer) {
    frozen_mean = stats.running_mean;
    frozen_var = stats.running_var;
  }
  return g.record("batchnorm2d", std::move(out), {x, gamma, beta}, [=](const BackwardArgs& args) {
    const Tensor& X = *args.inputs[0];
    const Tensor& G = *args.inputs[1];
    const Tensor& dY = args.out_grad;
    const std::int64_t B = X.dim(0), C = X.dim(1), plane = X.dim(2) * X.dim(3);
    const double m = static_cast<double>(B * plane);
    for (std::int64_t c = 0; c < C; ++c) {
      double mean, invstd;
      if (mode == ops::BatchNormMode::train) {
        double s = 0.0;
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t i = 0; i < plane; ++i) s += X[(b * C + c) * plane + i];
        mean = s / m;
        double sq = 0.0;
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t i = 0; i < plane; ++i) {
            const double d = X[(b * C + c) * plane + i] - mean;
            sq += d * d;
          }
        invstd = 1.0 / std::sqrt(sq / m + eps);
      } else {
        mean = frozen_mean[c];
        invstd = 1.0 / std::sqrt(frozen_var[c] + eps);
      }
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < plane; ++i) {
          const std::int64_t k = (b * C + c) * plane + i;
          sum_dy += dY[k];
          sum_dy_xhat += dY[k] * (X[k] - mean) * invstd;
        }
      if (Tensor* dg = args.grads[1]) (*dg)[c] += sum_dy_xhat;
      if (Tensor* db = args.grads[2]) (*db)[c] += sum_dy;
      if (Tensor* dx = args.grads[0]) {
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t i = 0; i < plane; ++i) {
            const std::int64_t k = (b * C + c) * plane + i;
            if (mode == ops::BatchNormMode::train) {
              const double xhat = (X[k] - mean) * invstd;
              (*dx)[k] += G[c] * invstd / m * (m * dY[k] - sum_dy - xhat * sum_dy_xhat);
            } else {
              (*dx)[k] += G[c] * invstd * dY[k];
            }
          }
      }
    }
  });
}

Var relu(Var x) {
  Graph& g = graph_of({x});
  return g.record("relu", ops::relu(x.value()), {x}, [](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0]) {
      const Tensor& X = *args.inputs[0];
      for (std::int64_t i = 0; i < X.numel(); ++i)
        if (X[i] > 0.0) (*dx)[i] += args.out_grad[i];
    }
  });
}

Var softmax_rows(Var x) {
  Graph& g = graph_of({x});
  return g.record("softmax_rows", ops::softmax_rows(x.value()), {x}, [](const BackwardArgs& args) {
    Tensor* dx = args.grads[0];
    if (!dx) return;
    const Tensor& Y = args.out;
    const std::int64_t n = Y.dim(0), m = Y.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < m; ++j) dot += args.out_grad[i * m + j] * Y[i * m + j];
      for (std::int64_t j = 0; j < m; ++j)
        (*dx)[i * m + j] += Y[i * m + j] * (args.out_grad[i * m + j] - dot);
    }
  });
}

Var l2_normalize_rows(Var x) {
  Graph& g = graph_of({x});
  return g.record("l2_normalize_rows", ops::l2_normalize_rows(x.value()), {x},
                  [](const BackwardArgs& args) {
                    Tensor* dx = args.grads[0];
                    if (!dx) return;
                    const Tensor& X = *args.inputs[0];
                    const Tensor& Y = args.out;
                    const std::int64_t n = X.dim(0), d = X.dim(1);
                    for (std::int64_t i = 0; i < n; ++i) {
                      double sq = 0.0, dot = 0.0;
                      for (std::int64_t j = 0; j < d; ++j) {
                        sq += X[i * d + j] * X[i * d + j];
                        dot += Y[i * d + j] * args.out_grad[i * d + j];
                      }
                      const double norm = std::sqrt(sq);
                      // Below the floor the map is linear: y = x / floor.
                      const double radial = norm > ops::kL2Epsilon ? dot : 0.0;
                      const double inv = 1.0 / std::max(norm, ops::kL2Epsilon);
                      for (std::int64_t j = 0; j < d; ++j)
                        (*dx)[i * d + j] += inv * (args.out_grad[i * d + j] - Y[i * d + j] * radial);
                    }
                  });
}

Var bilinear_resize(Var x, std::int64_t out_h, std::int64_t out_w) {
  Graph& g = graph_of({x});
  const std::int64_t H = x.dim(2), W = x.dim(3);
  return g.record("bilinear_resize", ops::bilinear_resize(x.value(), out_h, out_w), {x},
                  [=](const BackwardArgs& args) {
                    Tensor* dx = args.grads[0];
                    if (!dx) return;
                    const auto ty = ops::detail::linear_taps(H, out_h);
                    const auto tx = ops::detail::linear_taps(W, out_w);
                    const std::int64_t planes = dx->dim(0) * dx->dim(1);
                    for (std::int64_t bc = 0; bc < planes; ++bc) {
                      double* d = dx->ptr() + bc * H * W;
                      const double* gy = args.out_grad.ptr() + bc * out_h * out_w;
                      for (std::int64_t oy = 0; oy < out_h; ++oy) {
                        const auto& a = ty[static_cast<std::size_t>(oy)];
                        for (std::int64_t ox = 0; ox < out_w; ++ox) {
                          const auto& b = tx[static_cast<std::size_t>(ox)];
                          const double v = gy[oy * out_w + ox];
                          d[a.i0 * W + b.i0] += a.w0 * b.w0 * v;
                          d[a.i0 * W + b.i1] += a.w0 * b.w1 * v;
                          d[a.i1 * W + b.i0] += a.w1 * b.w0 * v;
                          d[a.i1 * W + b.i1] += a.w1 * b.w1 * v;
                        }
                      }
                    }
                  });
}

Var bilinear_upsample(Var x, std::int64_t scale) {
  if (scale < 1) throw ContractError("bilinear_upsample: scale must be >= 1");
  if (scale == 1) return x;
  return bilinear_resize(x, x.dim(2) * scale, x.dim(3) * scale);
}

Var concat_channels(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const std::int64_t Ca = a.dim(1), Cb = b.dim(1);
  return g.record("concat_channels", ops::concat_channels(a.value(), b.value()), {a, b},
                  [Ca, Cb](const BackwardArgs& args) {
                    const Tensor& dy = args.out_grad;
                    const std::int64_t B = dy.dim(0), plane = dy.dim(2) * dy.dim(3);
                    for (std::int64_t n = 0; n < B; ++n) {
                      const double* src = dy.ptr() + n * (Ca + Cb) * plane;
                      if (Tensor* da = args.grads[0]) {
                        double* d = da->ptr() + n * Ca * plane;
                        for (std::int64_t i = 0; i < Ca * plane; ++i) d[i] += src[i];
                      }
                      if (Tensor* db = args.grads[1]) {
                        double* d = db->ptr() + n * Cb * plane;
                        for (std::int64_t i = 0; i < Cb * plane; ++i) d[i] += src[Ca * plane + i];
                      }
                    }
                  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of({a, b});
  return g.record("add", ops::add(a.value(), b.value()), {a, b}, [](const BackwardArgs& args) {
    if (Tensor* da = args.grads[0]) axpy(*da, args.out_grad);
    if (Tensor* db = args.grads[1]) axpy(*db, args.out_grad);
  });
}

Var global_avg_pool(Var x) {
  Graph& g = graph_of({x});
  return g.record("global_avg_pool", ops::global_avg_pool(x.value()), {x},
                  [](const BackwardArgs& args) {
                    Tensor* dx = args.grads[0];
                    if (!dx) return;
                    const std::int64_t plane = dx->dim(2) * dx->dim(3);
                    const double inv = 1.0 / static_cast<double>(plane);
                    for (std::int64_t bc = 0; bc < args.out_grad.numel(); ++bc)
                      for (std::int64_t i = 0; i < plane; ++i)
                        (*dx)[bc * plane + i] += args.out_grad[bc] * inv;
                  });
}

Var max_pool2d(Var x, std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
  Graph& g = graph_of({x});
  return g.record(
      "max_pool2d", ops::max_pool2d(x.value(), kernel, stride, padding), {x},
      [=](const BackwardArgs& args) {
        Tensor* dx = args.grads[0];
        if (!dx) return;
        const Tensor& X = *args.inputs[0];
        const std::int64_t H = X.dim(2), W = X.dim(3);
        const std::int64_t Ho = args.out.dim(2), Wo = args.out.dim(3);
        for (std::int64_t bc = 0; bc < X.dim(0) * X.dim(1); ++bc) {
          const double* src = X.ptr() + bc * H * W;
          for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
              double best = -std::numeric_limits<double>::infinity();
              std::int64_t arg = -1;
              for (std::int64_t ki = 0; ki < kernel; ++ki) {
                const std::int64_t iy = oy * stride - padding + ki;
                if (iy < 0 || iy >= H) continue;
                for (std::int64_t kj = 0; kj < kernel; ++kj) {
                  const std::int64_t ix = ox * stride - padding + kj;
                  if (ix < 0 || ix >= W) continue;
                  if (src[iy * W + ix] > best) {
                    best = src[iy * W + ix];
                    arg = iy * W + ix;
                  }
                }
              }
              if (arg >= 0) (*dx)[bc * H * W + arg] += args.out_grad[(bc * Ho + oy) * Wo + ox];
            }
        }
      });
}

Var softmax_channels(Var logits) {
  Graph& g = graph_of({logits});
  return g.record("softmax_channels", ops::softmax_channels(logits.value()), {logits},
                  [](const BackwardArgs& args) {
                    Tensor* dx = args.grads[0];
                    if (!dx) return;
                    const Tensor& P = args.out;
                    const std::int64_t B = P.dim(0), K = P.dim(1), plane = P.dim(2) * P.dim(3);
                    for (std::int64_t b = 0; b < B; ++b) {
                      const std::int64_t base = b * K * plane;
                      for (std::int64_t i = 0; i < plane; ++i) {
                        double dot = 0.0;
                        for (std::int64_t k = 0; k < K; ++k)
                          dot += P[base + k * plane + i] * args.out_grad[base + k * plane + i];
                        for (std::int64_t k = 0; k < K; ++k) {
                          const std::int64_t idx = base + k * plane + i;
                          (*dx)[idx] += P[idx] * (args.out_grad[idx] - dot);
                        }
                      }
                    }
                  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of({a, b});
  if (!a.value().same_shape(b.value())) throw DimensionError("mul: extents differ");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return g.record("mul", std::move(out), {a, b}, [](const BackwardArgs& args) {
    const Tensor& A = *args.inputs[0];
    const Tensor& B = *args.inputs[1];
    if (Tensor* da = args.grads[0])
      for (std::int64_t i = 0; i < A.numel(); ++i) (*da)[i] += args.out_grad[i] * B[i];
    if (Tensor* db = args.grads[1])
      for (std::int64_t i = 0; i < A.numel(); ++i) (*db)[i] += args.out_grad[i] * A[i];
  });
}

Var scale(Var x, double c) {
  Graph& g = graph_of({x});
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = c * x.value()[i];
  return g.record("scale", std::move(out), {x}, [c](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0]) axpy(*dx, args.out_grad, c);
  });
}

Var add_scalar(Var x, double c) {
  Graph& g = graph_of({x});
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] + c;
  return g.record("add_scalar", std::move(out), {x}, [](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0]) axpy(*dx, args.out_grad);
  });
}

Var sum(Var x) {
  Graph& g = graph_of({x});
  return g.record("sum", Tensor::scalar(x.value().sum()), {x}, [](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0])
      for (auto& v : dx->data()) v += args.out_grad[0];
  });
}

Var col_sum(Var x) {
  Graph& g = graph_of({x});
  const Tensor& X = x.value();
  if (X.rank() != 2) throw DimensionError("col_sum expects a matrix");
  const std::int64_t n = X.dim(0), d = X.dim(1);
  Tensor out({1, d});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out[j] += X[i * d + j];
  return g.record("col_sum", std::move(out), {x}, [n, d](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0])
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) (*dx)[i * d + j] += args.out_grad[j];
  });
}

Var add_row(Var x, Var row) {
  Graph& g = graph_of({x, row});
  const Tensor& X = x.value();
  const Tensor& R = row.value();
  if (X.rank() != 2 || R.rank() != 2 || R.dim(0) != 1 || R.dim(1) != X.dim(1)) {
    throw DimensionError("add_row: expected N x D and 1 x D");
  }
  const std::int64_t n = X.dim(0), d = X.dim(1);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out[i * d + j] = X[i * d + j] + R[j];
  return g.record("add_row", std::move(out), {x, row}, [n, d](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0]) axpy(*dx, args.out_grad);
    if (Tensor* dr = args.grads[1])
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) (*dr)[j] += args.out_grad[i * d + j];
  });
}

Var div_rows(Var x, Var denom) {
  Graph& g = graph_of({x, denom});
  const Tensor& X = x.value();
  const Tensor& D = denom.value();
  if (X.rank() != 2 || D.rank() != 2 || D.dim(1) != 1 || D.dim(0) != X.dim(0)) {
    throw DimensionError("div_rows: expected N x D and N x 1");
  }
  const std::int64_t n = X.dim(0), d = X.dim(1);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out[i * d + j] = X[i * d + j] / D[i];
  return g.record("div_rows", std::move(out), {x, denom}, [n, d](const BackwardArgs& args) {
    const Tensor& Xv = *args.inputs[0];
    const Tensor& Dv = *args.inputs[1];
    for (std::int64_t i = 0; i < n; ++i) {
      const double inv = 1.0 / Dv[i];
      if (Tensor* dx = args.grads[0])
        for (std::int64_t j = 0; j < d; ++j) (*dx)[i * d + j] += args.out_grad[i * d + j] * inv;
      if (Tensor* dd = args.grads[1]) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += args.out_grad[i * d + j] * Xv[i * d + j];
        (*dd)[i] -= s * inv * inv;
      }
    }
  });
}

Var clamp_min(Var x, double floor, std::int64_t* clamp_count) {
  Graph& g = graph_of({x});
  Tensor out(x.shape());
  std::int64_t clamped = 0;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const double v = x.value()[i];
    if (v < floor) ++clamped;
    out[i] = v < floor ? floor : v;
  }
  if (clamp_count) *clamp_count += clamped;
  return g.record("clamp_min", std::move(out), {x}, [floor](const BackwardArgs& args) {
    if (Tensor* dx = args.grads[0]) {
      const Tensor& X = *args.inputs[0];
      for (std::int64_t i = 0; i < X.numel(); ++i)
        if (X[i] >= floor) (*dx)[i] += args.out_grad[i];
    }
  });
}

Var feature_to_rows(Var x, std::int64_t batch_index) {
  Graph& g = graph_of({x});
  return g.record("feature_to_rows", ops::feature_to_rows(x.value(), batch_index), {x},
                  [batch_index](const BackwardArgs& args) {
                    Tensor* dx = args.grads[0];
                    if (!dx) return;
                    const std::int64_t C = dx->dim(1), plane = dx->dim(2) * dx->dim(3);
                    double* d = dx->ptr() + batch_index * C * plane;
                    for (std::int64_t p = 0; p < plane; ++p)
                      for (std::int64_t c = 0; c < C; ++c) d[c * plane + p] += args.out_grad[p * C + c];
                  });
}

Var rows_to_feature(Var rows, std::int64_t height, std::int64_t width) {
  Graph& g = graph_of({rows});
  return g.record("rows_to_feature", ops::rows_to_feature(rows.value(), height, width), {rows},
                  [](const BackwardArgs& args) {
                    Tensor* dr = args.grads[0];
                    if (!dr) return;
                    const std::int64_t plane = dr->dim(0), C = dr->dim(1);
                    for (std::int64_t p = 0; p < plane; ++p)
                      for (std::int64_t c = 0; c < C; ++c)
                        (*dr)[p * C + c] += args.out_grad[c * plane + p];
                  });
}

Var concat_batch(const std::vector<Var>& items) {
  if (items.empty()) throw ContractError("concat_batch needs at least one item");
  Graph& g = *items.front().graph;
  Shape shape = items.front().shape();
  std::int64_t total = 0;
  for (const Var& v : items) {
    if (v.graph != &g) throw ContractError("operands belong to different graphs");
    Shape s = v.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw DimensionError("concat_batch: item extents differ");
    }
    total += s[0];
  }
  shape[0] = total;
  Tensor out(shape);
  std::int64_t offset = 0;
  for (const Var& v : items) {
    std::copy(v.value().data().begin(), v.value().data().end(), out.ptr() + offset);
    offset += v.value().numel();
  }
  return g.record("concat_batch", std::move(out), items, [](const BackwardArgs& args) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < args.inputs.size(); ++k) {
      const std::int64_t n = args.inputs[k]->numel();
      if (Tensor* d = args.grads[k])
        for (std::int64_t i = 0; i < n; ++i) (*d)[i] += args.out_grad[off + i];
      off += n;
    }
  });
}

}  // namespace autograd
}  // namespace abcnet
