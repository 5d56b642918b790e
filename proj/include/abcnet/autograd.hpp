// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "abcnet/ops.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int axis) const { return value().dim(axis); }
};

struct BackwardArgs {
  const Tensor& out_grad;
  const Tensor& out;
  std::span<const Tensor* const> inputs;
  /// Adjoint accumulators for each input; null when the input needs no gradient.
  std::span<Tensor* const> grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Tape of operations recorded in construction order. Backward visits nodes in
/// exact reverse order, so adjoint accumulation is deterministic.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf owned by the graph that receives a gradient.
  Var leaf(Tensor value);
  /// Leaf that aliases external storage; `storage` must outlive the graph.
  Var parameter(std::string name, const Tensor& storage);

  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Adjoint after backward(); zeros if the node was not reached.
  Tensor grad(Var v) const;

  /// Reverse sweep from a single-element loss node.
  void backward(Var loss);

  struct ParameterGrad {
    std::string name;
    Tensor grad;
  };
  std::vector<ParameterGrad> parameter_grads() const;

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).op; }

  /// Cap on bytes held by node values; exceeding it raises ResourceError.
  void set_memory_budget(std::size_t bytes) { budget_ = bytes; }
  std::size_t bytes_held() const { return bytes_; }

  /// Multiply-accumulate tally of matmul and convolution nodes.
  void add_macs(std::int64_t n) { macs_ += n; }
  std::int64_t macs() const { return macs_; }

 private:
  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void charge(const Tensor& t);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::size_t budget_ = 0;
  std::size_t bytes_ = 0;
  std::int64_t macs_ = 0;
};

// Differentiable operators. All inputs must belong to the same graph.
namespace autograd {

Var matmul(Var a, Var b);
Var transpose(Var a);
/// `bias` may be an invalid Var when the spec has no bias.
Var conv2d(Var x, Var w, Var bias, const ops::ConvSpec& spec);
Var batchnorm2d(Var x, Var gamma, Var beta, ops::BatchNormStats& stats, ops::BatchNormMode mode);
Var relu(Var x);
Var softmax_rows(Var x);
Var l2_normalize_rows(Var x);
Var bilinear_resize(Var x, std::int64_t out_h, std::int64_t out_w);
Var bilinear_upsample(Var x, std::int64_t scale);
Var concat_channels(Var a, Var b);
Var add(Var a, Var b);
Var global_avg_pool(Var x);
Var max_pool2d(Var x, std::int64_t kernel, std::int64_t stride, std::int64_t padding);
Var softmax_channels(Var logits);

Var mul(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var sum(Var x);
/// N x D -> 1 x D.
Var col_sum(Var x);
/// N x D plus a broadcast 1 x D row.
Var add_row(Var x, Var row);
/// N x D divided row-wise by an N x 1 column.
Var div_rows(Var x, Var denom);
/// max(x, floor) elementwise; gradient is zero where clamped. Each clamped
/// element increments `clamp_count` when provided.
Var clamp_min(Var x, double floor, std::int64_t* clamp_count = nullptr);

Var feature_to_rows(Var x, std::int64_t batch_index);
Var rows_to_feature(Var rows, std::int64_t height, std::int64_t width);
Var concat_batch(const std::vector<Var>& items);

}  // namespace autograd
}  // namespace abcnet
