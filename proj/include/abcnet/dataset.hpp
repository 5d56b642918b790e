// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "abcnet/losses.hpp"
#include "abcnet/pnm.hpp"
#include "abcnet/tensor.hpp"

namespace abcnet::io {

struct PaletteEntry {
  std::string_view name;
  std::uint8_t r, g, b;
};

/// ISPRS 2-D labeling colors in class-index order. Masks of real tiles are
/// converted with rgb_to_labels; unknown colors map to the ignore label.
inline constexpr std::array<PaletteEntry, 6> kIsprsPalette{{
    {"impervious_surfaces", 255, 255, 255},
    {"building", 0, 0, 255},
    {"low_vegetation", 0, 255, 255},
    {"tree", 0, 255, 0},
    {"car", 255, 255, 0},
    {"clutter", 255, 0, 0},
}};

Image rgb_to_labels(const Image& rgb);
Image labels_to_rgb(const Image& mask);

struct Patch {
  std::int64_t x = 0;
  std::int64_t y = 0;
  Image image;
  Image mask;
};

/// Offsets 0, stride, 2*stride, ... plus a final window flush with the far
/// edge when the grid leaves a remainder.
std::vector<std::int64_t> window_starts(std::int64_t extent, std::int64_t size, std::int64_t stride);
std::vector<Patch> crop_patches(const Image& tile, const Image& mask, std::int64_t size,
                                std::int64_t stride);

struct ManifestEntry {
  std::string split;
  std::string image;
  std::string mask;
};

/// Line format: `# key=value` header lines then `split<TAB>image<TAB>mask`.
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::int64_t num_classes = 0;
  std::int64_t patch_size = 0;
  std::uint64_t seed = 0;
  std::string base_dir;

  static DatasetManifest read(const std::string& path);
  void write(const std::string& path) const;
  std::vector<ManifestEntry> split(std::string_view name) const;
  std::string resolve(const std::string& relative) const;
  /// Throws ConfigError when a path appears in two splits.
  void validate() const;
};

struct Sample {
  Image image;
  Image mask;
};

/// Loads every entry of a split; image and mask extents must agree.
std::vector<Sample> load_split(const DatasetManifest& manifest, std::string_view split);

// Synthetic segmentation scenes: a textured background (class 0) with large
// rectangles, disks and stripes of classes 1..K-1. Each class has its own
// base color; pixels carry Gaussian texture noise.

enum class ShapeKind { rectangle, disk, stripe };

struct Shape2D {
  ShapeKind kind = ShapeKind::rectangle;
  std::uint8_t label = 1;
  // rectangle: [x0, x1) x [y0, y1); disk: center (cx, cy), radius r;
  // stripe: |(x - cx) cos(a) + (y - cy) sin(a)| < half_width
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double cx = 0, cy = 0, r = 0;
  double angle = 0, half_width = 0;

  bool contains(double x, double y) const;
};

struct SynthScene {
  std::vector<Shape2D> shapes;  // painted in order, later shapes on top
  Image image;
  Image mask;
};

std::array<std::uint8_t, 3> class_color(std::int64_t label);
/// Rasterizes shapes at pixel centers; `seed` drives the texture noise only.
SynthScene render_scene(std::vector<Shape2D> shapes, std::int64_t size, std::uint64_t seed);
SynthScene synth_scene(std::int64_t size, std::int64_t num_classes, std::uint64_t seed);

/// Writes n scenes as img_XXX.ppm / mask_XXX.pgm plus manifest.tsv into dir.
/// Every fourth image (index % 4 == 3) goes to 'val', the rest to 'train'.
DatasetManifest synth_shapes_dataset(const std::string& dir, std::int64_t n_images,
                                     std::int64_t size, std::int64_t num_classes,
                                     std::uint64_t seed);

/// Per-channel (v / 255 - 0.5) / 0.25 into a B x 3 x H x W tensor.
Tensor images_to_tensor(const std::vector<const Image*>& images);
losses::Labels masks_to_labels(const std::vector<const Image*>& masks);

}  // namespace abcnet::io
