// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "abcnet/autograd.hpp"
#include "abcnet/ops.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet::model {

struct SpatialPathConfig {
  std::vector<std::int64_t> channels{64, 64, 64};
  std::int64_t kernel = 3;
};

struct BackboneConfig {
  std::int64_t stem_channels = 64;
  std::array<std::int64_t, 4> stage_channels{64, 128, 256, 512};
  std::array<std::int64_t, 4> stage_strides{1, 2, 2, 2};
  std::int64_t blocks_per_stage = 2;
};

/// Fusion of the spatial and context branches. `none` feeds the context
/// features straight to the head (rows without a spatial path).
enum class FusionMode { none, sum, cat, fam };

std::string_view fusion_name(FusionMode m);
FusionMode parse_fusion(std::string_view s);

struct ABCNetConfig {
  std::int64_t num_classes = 6;
  std::int64_t in_channels = 3;
  SpatialPathConfig spatial;
  BackboneConfig backbone;
  /// Attention key extent is channels / key_divisor in every AEM and the FAM.
  std::int64_t key_divisor = 8;
  /// Width of the fused context features at stride 8.
  std::int64_t context_channels = 128;
  /// Output width of the FAM balancing conv.
  std::int64_t fam_channels = 128;
  std::int64_t head_channels = 64;
  std::int64_t aux_channels = 64;
  FusionMode fusion = FusionMode::fam;
  bool include_spatial_path = true;
  bool include_aem = true;
  /// Emit the two auxiliary outputs from forward.
  bool training_mode = false;

  /// ResNet-18 contextual path with 64-wide spatial path.
  static ABCNetConfig full();
  /// Desk-scale variant: stages 16/32/64/128.
  static ABCNetConfig mini();
  /// Looks up "full" or "mini".
  static ABCNetConfig named(std::string_view name);

  void validate() const;
};

/// The five component rows of the ablation table, in order.
enum class Ablation { cp, cp_aem, cp_sp_aem_sum, cp_sp_aem_cat, cp_sp_aem_fam };

inline constexpr std::array<Ablation, 5> kAblationRows{
    Ablation::cp, Ablation::cp_aem, Ablation::cp_sp_aem_sum, Ablation::cp_sp_aem_cat,
    Ablation::cp_sp_aem_fam};

std::string_view ablation_label(Ablation a);
ABCNetConfig ablation_config(Ablation a, ABCNetConfig base);

enum class Precision { f64, f32 };

/// Ordered named parameters plus batch-norm running statistics.
class NetworkWeights {
 public:
  /// Declares every parameter of `cfg` (auxiliary heads included) and draws
  /// conv weights from N(0, 2 / fan_in) with the given seed.
  static NetworkWeights init(const ABCNetConfig& cfg, std::uint64_t seed);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::int64_t parameter_count() const;

  ops::BatchNormStats& stats(const std::string& name);
  const std::map<std::string, ops::BatchNormStats>& all_stats() const { return stats_; }
  std::map<std::string, ops::BatchNormStats>& all_stats() { return stats_; }

  /// Rounds every value (and running statistic) to the nearest float.
  void round_to_float();

  Tensor& add(const std::string& name, Tensor value);
  ops::BatchNormStats& add_stats(const std::string& name, std::int64_t channels);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, ops::BatchNormStats> stats_;
};

/// Per-forward binding of weights into a graph.
class Context {
 public:
  Context(Graph& graph, NetworkWeights& weights, ops::BatchNormMode mode)
      : graph_(graph), weights_(weights), mode_(mode) {}

  Graph& graph() { return graph_; }
  ops::BatchNormMode mode() const { return mode_; }

  /// Parameter `name`; created with Kaiming init when declaring.
  Var param(const std::string& name, const Shape& shape, std::int64_t fan_in, double fill = 0.0);
  ops::BatchNormStats& bn_stats(const std::string& name, std::int64_t channels);

  /// Substitutes graph leaves for stored parameters (used by gradient checks).
  std::unordered_map<std::string, Var> overrides;
  /// Attention denominators clamped during this forward.
  std::int64_t clamped_denominators = 0;

 private:
  friend class NetworkWeights;
  Graph& graph_;
  NetworkWeights& weights_;
  ops::BatchNormMode mode_;
  Rng* declare_rng_ = nullptr;
  std::unordered_map<std::string, Var> bound_;
};

// Blocks. `prefix` names the parameters, e.g. "aem4".
Var conv_bn_act(Context& ctx, const std::string& prefix, Var x, const ops::ConvSpec& spec,
                bool relu = true);
Var basic_block(Context& ctx, const std::string& prefix, Var x, std::int64_t out_channels,
                std::int64_t stride);
Var spatial_path_forward(Context& ctx, Var x, const ABCNetConfig& cfg);
/// Stride-16 and stride-32 stage outputs.
std::pair<Var, Var> backbone_forward(Context& ctx, Var x, const ABCNetConfig& cfg);
/// Linear-attention block: 1x1 Q/K/V projections, attention per batch item.
Var attention_block(Context& ctx, const std::string& prefix, Var f, std::int64_t key_dim);
Var aem_forward(Context& ctx, const std::string& prefix, Var f, std::int64_t key_dim);
Var fam_forward(Context& ctx, Var spatial_f, Var context_f, const ABCNetConfig& cfg);

struct ForwardOutput {
  Var logits;
  /// Valid only in training mode.
  Var aux1;
  Var aux2;
};

ForwardOutput abcnet_forward(Context& ctx, Var x, const ABCNetConfig& cfg);

/// Inference-mode logits for a B x 3 x H x W batch (running BN statistics).
Tensor predict(NetworkWeights& weights, const ABCNetConfig& cfg, const Tensor& x);

struct ParameterCounts {
  /// Keyed by leading name segment: backbone, aem4, aem5, spatial, context,
  /// fusion, head, aux1, aux2.
  std::map<std::string, std::int64_t> per_module;
  /// Everything used at inference (auxiliary heads excluded).
  std::int64_t inference_total = 0;
  std::int64_t training_total = 0;
};

ParameterCounts count_parameters(const ABCNetConfig& cfg);
ParameterCounts count_parameters(const NetworkWeights& weights);

}  // namespace abcnet::model
