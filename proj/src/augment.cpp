// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "abcnet/losses.hpp"

namespace abcnet::io {

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::identity: return "identity";
    case Transform::rot90: return "rot90";
    case Transform::rot180: return "rot180";
    case Transform::rot270: return "rot270";
    case Transform::hflip: return "hflip";
    case Transform::vflip: return "vflip";
  }
  return "?";
}

Transform inverse(Transform t) {
  if (t == Transform::rot90) return Transform::rot270;
  if (t == Transform::rot270) return Transform::rot90;
  return t;
}

namespace {

bool swaps_axes(Transform t) { return t == Transform::rot90 || t == Transform::rot270; }

/// Source pixel of output (ox, oy) for an input of width w and height h.
std::pair<std::int64_t, std::int64_t> source(Transform t, std::int64_t ox, std::int64_t oy,
                                             std::int64_t w, std::int64_t h) {
  switch (t) {
    case Transform::identity: return {ox, oy};
    case Transform::rot90: return {w - 1 - oy, ox};
    case Transform::rot180: return {w - 1 - ox, h - 1 - oy};
    case Transform::rot270: return {oy, h - 1 - ox};
    case Transform::hflip: return {w - 1 - ox, oy};
    case Transform::vflip: return {ox, h - 1 - oy};
  }
  return {ox, oy};
}

}  // namespace

Image apply_transform(const Image& img, Transform t) {
  const std::int64_t ow = swaps_axes(t) ? img.height : img.width;
  const std::int64_t oh = swaps_axes(t) ? img.width : img.height;
  Image out(ow, oh, img.channels);
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      const auto [sx, sy] = source(t, x, y, img.width, img.height);
      for (std::int64_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  return out;
}

Tensor apply_transform(const Tensor& x, Transform t) {
  if (x.rank() != 4) throw DimensionError("apply_transform expects B x C x H x W");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ow = swaps_axes(t) ? h : w;
  const std::int64_t oh = swaps_axes(t) ? w : h;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const auto [sx, sy] = source(t, ox, oy, w, h);
        out[(p * oh + oy) * ow + ox] = x[(p * h + sy) * w + sx];
      }
  return out;
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.rotate = c.scale = c.hflip = c.vflip = c.noise = false;
  return c;
}

Image rescale_crop(const Image& img, double factor, std::uint8_t fill) {
  const auto sw = std::max<std::int64_t>(1, std::lround(static_cast<double>(img.width) * factor));
  const auto sh = std::max<std::int64_t>(1, std::lround(static_cast<double>(img.height) * factor));
  // pixel (x, y) of the result samples the scaled image at (x + ox, y + oy)
  const std::int64_t ox = (sw - img.width) / 2, oy = (sh - img.height) / 2;
  Image out(img.width, img.height, img.channels, fill);
  for (std::int64_t y = 0; y < img.height; ++y) {
    const std::int64_t ty = y + oy;
    if (ty < 0 || ty >= sh) continue;
    const std::int64_t syy = std::min(img.height - 1, ty * img.height / sh);
    for (std::int64_t x = 0; x < img.width; ++x) {
      const std::int64_t tx = x + ox;
      if (tx < 0 || tx >= sw) continue;
      const std::int64_t sxx = std::min(img.width - 1, tx * img.width / sw);
      for (std::int64_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sxx, syy, c);
    }
  }
  return out;
}

std::pair<Image, Image> augment(const Image& image, const Image& mask, std::uint64_t seed,
                                const AugmentConfig& cfg) {
  if (image.width != mask.width || image.height != mask.height) {
    throw ShapeError("augment: image and mask extents differ");
  }
  Rng rng(seed);
  // Draw every variate up front so toggles do not shift the stream.
  const auto quarter = rng.below(4);
  const double factor = rng.uniform(cfg.scale_min, cfg.scale_max);
  const bool h = rng.uniform() < 0.5;
  const bool v = rng.uniform() < 0.5;
  Rng noise = rng.split();

  Image img = image, msk = mask;
  if (cfg.rotate && quarter != 0) {
    const Transform t = quarter == 1 ? Transform::rot90 : quarter == 2 ? Transform::rot180 : Transform::rot270;
    img = apply_transform(img, t);
    msk = apply_transform(msk, t);
  }
  if (cfg.scale) {
    img = rescale_crop(img, factor, 0);
    msk = rescale_crop(msk, factor, losses::kIgnoreLabel);
  }
  if (cfg.hflip && h) {
    img = apply_transform(img, Transform::hflip);
    msk = apply_transform(msk, Transform::hflip);
  }
  if (cfg.vflip && v) {
    img = apply_transform(img, Transform::vflip);
    msk = apply_transform(msk, Transform::vflip);
  }
  if (cfg.noise && cfg.noise_sigma > 0) {
    for (auto& s : img.samples) {
      const double val = s + cfg.noise_sigma * noise.normal();
      s = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
    }
  }
  return {std::move(img), std::move(msk)};
}

std::vector<Transform> tta_transforms() {
  return {Transform::identity, Transform::rot90, Transform::rot180,
          Transform::rot270,   Transform::hflip, Transform::vflip};
}

Tensor tta_merge(const std::vector<Tensor>& maps, const std::vector<Transform>& applied) {
  if (maps.empty() || maps.size() != applied.size()) {
    throw ContractError("tta_merge needs one transform per map");
  }
  // Accumulate offsets from the first map so identical inputs merge exactly.
  const Tensor first = apply_transform(maps[0], inverse(applied[0]));
  Tensor offset(first.shape(), 0.0);
  for (std::size_t i = 1; i < maps.size(); ++i) {
    const Tensor back = apply_transform(maps[i], inverse(applied[i]));
    if (!back.same_shape(first)) {
      throw ShapeError("TTA maps disagree after inverse mapping: " + shape_str(back.shape()) +
                       " vs " + shape_str(first.shape()));
    }
    for (std::int64_t k = 0; k < first.numel(); ++k) offset[k] += back[k] - first[k];
  }
  Tensor out = first;
  const double n = static_cast<double>(maps.size());
  for (std::int64_t k = 0; k < out.numel(); ++k) out[k] += offset[k] / n;
  return out;
}

}  // namespace abcnet::io
