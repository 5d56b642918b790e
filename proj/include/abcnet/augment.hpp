// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "abcnet/pnm.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet::io {

enum class Transform { identity, rot90, rot180, rot270, hflip, vflip };

std::string_view transform_name(Transform t);
Transform inverse(Transform t);

/// Rotations are counter-clockwise; hflip mirrors columns, vflip rows.
Image apply_transform(const Image& img, Transform t);
/// Same mapping on the two trailing axes of a B x C x H x W tensor.
Tensor apply_transform(const Tensor& x, Transform t);

struct AugmentConfig {
  bool rotate = true;
  bool scale = true;
  bool hflip = true;
  bool vflip = true;
  bool noise = true;
  double scale_min = 0.75;
  double scale_max = 1.25;
  /// Gaussian noise standard deviation in 8-bit sample units.
  double noise_sigma = 6.0;

  static AugmentConfig none();
};

/// Random rotation by a multiple of 90 degrees, nearest-neighbor rescale with
/// center crop or pad (image 0, mask ignore label), flips, then image-only
/// noise. The result depends only on the inputs and `seed`.
std::pair<Image, Image> augment(const Image& image, const Image& mask, std::uint64_t seed,
                                const AugmentConfig& cfg = {});

/// Nearest-neighbor rescale by `factor` then center crop/pad back to the
/// original extent, padding with `fill`.
Image rescale_crop(const Image& img, double factor, std::uint8_t fill);

/// identity, three rotations, two flips.
std::vector<Transform> tta_transforms();

/// Mean of inverse-transformed maps; maps[i] was predicted on the input
/// transformed by applied[i].
Tensor tta_merge(const std::vector<Tensor>& maps, const std::vector<Transform>& applied);

}  // namespace abcnet::io
