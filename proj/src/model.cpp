// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/model.hpp"

#include <cmath>

#include "abcnet/attention.hpp"

namespace abcnet::model {

namespace ag = autograd;

std::string_view fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::sum: return "sum";
    case FusionMode::cat: return "cat";
    case FusionMode::fam: return "fam";
  }
  return "?";
}

FusionMode parse_fusion(std::string_view s) {
  if (s == "none") return FusionMode::none;
  if (s == "sum") return FusionMode::sum;
  if (s == "cat") return FusionMode::cat;
  if (s == "fam") return FusionMode::fam;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

ABCNetConfig ABCNetConfig::full() { return ABCNetConfig{}; }

ABCNetConfig ABCNetConfig::mini() {
  ABCNetConfig c;
  c.spatial.channels = {16, 16, 16};
  c.backbone.stem_channels = 16;
  c.backbone.stage_channels = {16, 32, 64, 128};
  c.context_channels = 32;
  c.fam_channels = 32;
  c.head_channels = 16;
  c.aux_channels = 16;
  return c;
}

ABCNetConfig ABCNetConfig::named(std::string_view name) {
  if (name == "full") return full();
  if (name == "mini") return mini();
  throw ConfigError("unknown model config '" + std::string(name) + "' (expected full or mini)");
}

void ABCNetConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (spatial.channels.size() != 3) throw ConfigError("spatial path has exactly three layers");
  for (auto c : spatial.channels)
    if (c < 1) throw ConfigError("spatial channels must be positive");
  for (auto c : backbone.stage_channels)
    if (c < key_divisor) throw ConfigError("stage channels must be >= key_divisor");
  if (backbone.stage_strides != std::array<std::int64_t, 4>{1, 2, 2, 2}) {
    throw ConfigError("backbone strides must be 1/2/2/2 so the last stages sit at 1/16 and 1/32");
  }
  if (backbone.blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (context_channels < 1 || fam_channels < key_divisor || head_channels < 1 || aux_channels < 1) {
    throw ConfigError("head widths must be positive");
  }
  if (include_spatial_path == (fusion == FusionMode::none)) {
    throw ConfigError("fusion mode 'none' is exactly the configuration without a spatial path");
  }
}

std::string_view ablation_label(Ablation a) {
  switch (a) {
    case Ablation::cp: return "Cp";
    case Ablation::cp_aem: return "Cp + AEM";
    case Ablation::cp_sp_aem_sum: return "Cp + Sp + AEM(Sum)";
    case Ablation::cp_sp_aem_cat: return "Cp + Sp + AEM(Cat)";
    case Ablation::cp_sp_aem_fam: return "Cp + Sp + AEM + FAM";
  }
  return "?";
}

ABCNetConfig ablation_config(Ablation a, ABCNetConfig base) {
  base.include_aem = a != Ablation::cp;
  base.include_spatial_path = a != Ablation::cp && a != Ablation::cp_aem;
  switch (a) {
    case Ablation::cp:
    case Ablation::cp_aem: base.fusion = FusionMode::none; break;
    case Ablation::cp_sp_aem_sum: base.fusion = FusionMode::sum; break;
    case Ablation::cp_sp_aem_cat: base.fusion = FusionMode::cat; break;
    case Ablation::cp_sp_aem_fam: base.fusion = FusionMode::fam; break;
  }
  return base;
}

// --- NetworkWeights -------------------------------------------------------

Tensor& NetworkWeights::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return values_[it->second];
}

const Tensor& NetworkWeights::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return values_[it->second];
}

Tensor& NetworkWeights::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
  return values_.back();
}

ops::BatchNormStats& NetworkWeights::add_stats(const std::string& name, std::int64_t channels) {
  if (stats_.count(name)) throw ContractError("duplicate batch-norm statistics '" + name + "'");
  return stats_.emplace(name, ops::BatchNormStats::fresh(channels)).first->second;
}

ops::BatchNormStats& NetworkWeights::stats(const std::string& name) {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw ConfigError("no batch-norm statistics named '" + name + "'");
  return it->second;
}

std::int64_t NetworkWeights::parameter_count() const {
  std::int64_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

void NetworkWeights::round_to_float() {
  auto round = [](Tensor& t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  };
  for (Tensor& t : values_) round(t);
  for (auto& [name, s] : stats_) {
    round(s.running_mean);
    round(s.running_var);
  }
}

NetworkWeights NetworkWeights::init(const ABCNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkWeights w;
  Rng rng(seed);
  ABCNetConfig declare = cfg;
  declare.training_mode = true;
  // One forward over a minimal input visits every parameter in execution order.
  Graph g(false);
  Context ctx(g, w, ops::BatchNormMode::train);
  ctx.declare_rng_ = &rng;
  const Var x = g.constant(Tensor::zeros({1, cfg.in_channels, 32, 32}));
  abcnet_forward(ctx, x, declare);
  return w;
}

// --- Context ----------------------------------------------------------------

Var Context::param(const std::string& name, const Shape& shape, std::int64_t fan_in, double fill) {
  if (auto it = overrides.find(name); it != overrides.end()) return it->second;
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  if (declare_rng_ != nullptr) {
    Tensor t(shape, fill);
    if (fan_in > 0) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& v : t.data()) v = stddev * declare_rng_->normal();
    }
    weights_.add(name, std::move(t));
  }
  const Tensor& stored = weights_.get(name);
  if (stored.shape() != shape) {
    throw ConfigError("parameter '" + name + "' has extents " + shape_str(stored.shape()) +
                      ", configuration expects " + shape_str(shape));
  }
  // Declaring still grows the store, so alias only once it is complete.
  const Var v = declare_rng_ != nullptr ? graph_.constant(stored) : graph_.parameter(name, stored);
  bound_.emplace(name, v);
  return v;
}

ops::BatchNormStats& Context::bn_stats(const std::string& name, std::int64_t channels) {
  if (declare_rng_ != nullptr && !weights_.all_stats().count(name)) {
    return weights_.add_stats(name, channels);
  }
  return weights_.stats(name);
}

// --- blocks -----------------------------------------------------------------

Var conv_bn_act(Context& ctx, const std::string& prefix, Var x, const ops::ConvSpec& spec,
                bool relu) {
  const std::int64_t fan_in = spec.in_channels * spec.kernel.h * spec.kernel.w;
  const Var w = ctx.param(prefix + ".conv.weight", spec.weight_shape(), fan_in);
  Var b;
  if (spec.bias) b = ctx.param(prefix + ".conv.bias", {spec.out_channels}, 0);
  const Var y = ag::conv2d(x, w, b, spec);
  const Var gamma = ctx.param(prefix + ".bn.weight", {spec.out_channels}, 0, 1.0);
  const Var beta = ctx.param(prefix + ".bn.bias", {spec.out_channels}, 0, 0.0);
  ops::BatchNormStats& stats = ctx.bn_stats(prefix + ".bn", spec.out_channels);
  const Var z = ag::batchnorm2d(y, gamma, beta, stats, ctx.mode());
  return relu ? ag::relu(z) : z;
}

namespace {

Var conv(Context& ctx, const std::string& prefix, Var x, const ops::ConvSpec& spec) {
  const std::int64_t fan_in = spec.in_channels * spec.kernel.h * spec.kernel.w;
  const Var w = ctx.param(prefix + ".weight", spec.weight_shape(), fan_in);
  Var b;
  if (spec.bias) b = ctx.param(prefix + ".bias", {spec.out_channels}, 0);
  return ag::conv2d(x, w, b, spec);
}

void require_divisible(Var x, std::int64_t factor, const char* what) {
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw ShapeError(std::string(what) + " needs H and W divisible by " + std::to_string(factor) +
                     ", got " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
  }
}

/// 3x3 conv-BN-ReLU, 1x1 classifier with bias, bilinear upsample.
Var seg_head(Context& ctx, const std::string& prefix, Var x, std::int64_t mid,
             std::int64_t classes, std::int64_t scale) {
  const Var h = conv_bn_act(ctx, prefix + ".block", x, ops::ConvSpec::square(x.dim(1), mid, 3));
  const Var logits = conv(ctx, prefix + ".classifier", h, ops::ConvSpec::square(mid, classes, 1, 1, true));
  return ag::bilinear_upsample(logits, scale);
}

}  // namespace

Var basic_block(Context& ctx, const std::string& prefix, Var x, std::int64_t out_channels,
                std::int64_t stride) {
  const std::int64_t in = x.dim(1);
  const Var a = conv_bn_act(ctx, prefix + ".conv1", x, ops::ConvSpec::square(in, out_channels, 3, stride));
  const Var b = conv_bn_act(ctx, prefix + ".conv2", a, ops::ConvSpec::square(out_channels, out_channels, 3),
                            false);
  Var shortcut = x;
  if (stride != 1 || in != out_channels) {
    shortcut = conv_bn_act(ctx, prefix + ".downsample", x,
                           ops::ConvSpec::square(in, out_channels, 1, stride), false);
  }
  return ag::relu(ag::add(b, shortcut));
}

Var spatial_path_forward(Context& ctx, Var x, const ABCNetConfig& cfg) {
  require_divisible(x, 8, "spatial path");
  Var h = x;
  for (std::size_t i = 0; i < cfg.spatial.channels.size(); ++i) {
    h = conv_bn_act(ctx, "spatial.layer" + std::to_string(i + 1), h,
                    ops::ConvSpec::square(h.dim(1), cfg.spatial.channels[i], cfg.spatial.kernel, 2));
  }
  return h;
}

std::pair<Var, Var> backbone_forward(Context& ctx, Var x, const ABCNetConfig& cfg) {
  require_divisible(x, 32, "backbone");
  const BackboneConfig& bb = cfg.backbone;
  Var h = conv_bn_act(ctx, "backbone.stem", x,
                      ops::ConvSpec::square(x.dim(1), bb.stem_channels, 7, 2));
  h = ag::max_pool2d(h, 3, 2, 1);
  Var s4, s5;
  for (int stage = 0; stage < 4; ++stage) {
    for (std::int64_t blk = 0; blk < bb.blocks_per_stage; ++blk) {
      const std::string name =
          "backbone.layer" + std::to_string(stage + 1) + "." + std::to_string(blk);
      h = basic_block(ctx, name, h, bb.stage_channels[static_cast<std::size_t>(stage)],
                      blk == 0 ? bb.stage_strides[static_cast<std::size_t>(stage)] : 1);
    }
    if (stage == 2) s4 = h;
    if (stage == 3) s5 = h;
  }
  return {s4, s5};
}

Var attention_block(Context& ctx, const std::string& prefix, Var f, std::int64_t key_dim) {
  const std::int64_t c = f.dim(1), height = f.dim(2), width = f.dim(3);
  const Var q = conv(ctx, prefix + ".query", f, ops::ConvSpec::square(c, key_dim, 1, 1, true));
  const Var k = conv(ctx, prefix + ".key", f, ops::ConvSpec::square(c, key_dim, 1, 1, true));
  const Var v = conv(ctx, prefix + ".value", f, ops::ConvSpec::square(c, c, 1, 1, true));
  std::vector<Var> items;
  for (std::int64_t b = 0; b < f.dim(0); ++b) {
    const Var out = attention::linear_attention(ag::feature_to_rows(q, b), ag::feature_to_rows(k, b),
                                                ag::feature_to_rows(v, b),
                                                &ctx.clamped_denominators);
    items.push_back(ag::rows_to_feature(out, height, width));
  }
  return items.size() == 1 ? items.front() : ag::concat_batch(items);
}

Var aem_forward(Context& ctx, const std::string& prefix, Var f, std::int64_t key_dim) {
  const Var a = attention_block(ctx, prefix + ".attention", f, key_dim);
  const Var r = conv_bn_act(ctx, prefix + ".refine", a, ops::ConvSpec::square(f.dim(1), f.dim(1), 3));
  return ag::add(r, f);
}

Var fam_forward(Context& ctx, Var spatial_f, Var context_f, const ABCNetConfig& cfg) {
  if (spatial_f.dim(0) != context_f.dim(0) || spatial_f.dim(2) != context_f.dim(2) ||
      spatial_f.dim(3) != context_f.dim(3)) {
    throw ShapeError("FAM inputs differ in batch or spatial extents: " +
                     shape_str(spatial_f.shape()) + " vs " + shape_str(context_f.shape()));
  }
  const Var cat = ag::concat_channels(spatial_f, context_f);
  const Var h = conv_bn_act(ctx, "fusion.balance", cat,
                            ops::ConvSpec::square(cat.dim(1), cfg.fam_channels, 1));
  const Var a = attention_block(ctx, "fusion.attention", h, cfg.fam_channels / cfg.key_divisor);
  return ag::add(h, a);
}

ForwardOutput abcnet_forward(Context& ctx, Var x, const ABCNetConfig& cfg) {
  cfg.validate();
  if (x.value().rank() != 4 || x.dim(1) != cfg.in_channels) {
    throw ShapeError("input must be B x " + std::to_string(cfg.in_channels) + " x H x W, got " +
                     shape_str(x.shape()));
  }
  require_divisible(x, 32, "ABCNet");
  auto [s4, s5] = backbone_forward(ctx, x, cfg);
  if (cfg.include_aem) {
    s4 = aem_forward(ctx, "aem4", s4, s4.dim(1) / cfg.key_divisor);
    s5 = aem_forward(ctx, "aem5", s5, s5.dim(1) / cfg.key_divisor);
  }
  ForwardOutput out;
  if (cfg.training_mode) {
    out.aux1 = seg_head(ctx, "aux1", s4, cfg.aux_channels, cfg.num_classes, 16);
    out.aux2 = seg_head(ctx, "aux2", s5, cfg.aux_channels, cfg.num_classes, 32);
  }
  const std::int64_t cc = cfg.context_channels;
  const Var l5 = conv_bn_act(ctx, "context.lateral5", s5, ops::ConvSpec::square(s5.dim(1), cc, 1));
  const Var l4 = conv_bn_act(ctx, "context.lateral4", s4, ops::ConvSpec::square(s4.dim(1), cc, 1));
  const Var merged = ag::add(ag::bilinear_upsample(l5, 2), l4);
  const Var fused = conv_bn_act(ctx, "context.fuse", merged, ops::ConvSpec::square(cc, cc, 3));
  const Var context = ag::bilinear_upsample(fused, 2);

  Var features = context;
  if (cfg.include_spatial_path) {
    const Var sp = spatial_path_forward(ctx, x, cfg);
    switch (cfg.fusion) {
      case FusionMode::sum: {
        Var proj = sp;
        if (sp.dim(1) != cc) {
          proj = conv_bn_act(ctx, "fusion.project", sp, ops::ConvSpec::square(sp.dim(1), cc, 1), false);
        }
        features = ag::add(proj, context);
        break;
      }
      case FusionMode::cat: features = ag::concat_channels(sp, context); break;
      case FusionMode::fam: features = fam_forward(ctx, sp, context, cfg); break;
      case FusionMode::none: break;
    }
  }
  out.logits = seg_head(ctx, "head", features, cfg.head_channels, cfg.num_classes, 8);
  return out;
}

Tensor predict(NetworkWeights& weights, const ABCNetConfig& cfg, const Tensor& x) {
  ABCNetConfig infer = cfg;
  infer.training_mode = false;
  Graph g(false);
  Context ctx(g, weights, ops::BatchNormMode::infer);
  const Var input = g.constant(x);
  return abcnet_forward(ctx, input, infer).logits.value();
}

ParameterCounts count_parameters(const NetworkWeights& weights) {
  ParameterCounts counts;
  for (std::size_t i = 0; i < weights.names().size(); ++i) {
    const std::string& name = weights.names()[i];
    const std::string module = name.substr(0, name.find('.'));
    const std::int64_t n = weights.values()[i].numel();
    counts.per_module[module] += n;
    counts.training_total += n;
    if (module != "aux1" && module != "aux2") counts.inference_total += n;
  }
  return counts;
}

ParameterCounts count_parameters(const ABCNetConfig& cfg) {
  return count_parameters(NetworkWeights::init(cfg, 0));
}

}  // namespace abcnet::model
