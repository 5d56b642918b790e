// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace abcnet::io {

namespace fs = std::filesystem;

Image rgb_to_labels(const Image& rgb) {
  if (rgb.channels != 3) throw ShapeError("rgb_to_labels expects a 3-channel image");
  Image mask(rgb.width, rgb.height, 1, losses::kIgnoreLabel);
  for (std::int64_t y = 0; y < rgb.height; ++y)
    for (std::int64_t x = 0; x < rgb.width; ++x)
      for (std::size_t k = 0; k < kIsprsPalette.size(); ++k) {
        const auto& p = kIsprsPalette[k];
        if (rgb.at(x, y, 0) == p.r && rgb.at(x, y, 1) == p.g && rgb.at(x, y, 2) == p.b) {
          mask.at(x, y) = static_cast<std::uint8_t>(k);
          break;
        }
      }
  return mask;
}

Image labels_to_rgb(const Image& mask) {
  if (mask.channels != 1) throw ShapeError("labels_to_rgb expects a 1-channel mask");
  Image rgb(mask.width, mask.height, 3);
  for (std::int64_t y = 0; y < mask.height; ++y)
    for (std::int64_t x = 0; x < mask.width; ++x) {
      const std::uint8_t l = mask.at(x, y);
      if (l >= kIsprsPalette.size()) continue;
      rgb.at(x, y, 0) = kIsprsPalette[l].r;
      rgb.at(x, y, 1) = kIsprsPalette[l].g;
      rgb.at(x, y, 2) = kIsprsPalette[l].b;
    }
  return rgb;
}

std::vector<std::int64_t> window_starts(std::int64_t extent, std::int64_t size, std::int64_t stride) {
  if (size < 1 || stride < 1) throw ContractError("patch size and stride must be positive");
  if (size > extent) {
    throw ShapeError("patch size " + std::to_string(size) + " exceeds extent " + std::to_string(extent));
  }
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + size <= extent; s += stride) starts.push_back(s);
  if (starts.back() + size < extent) starts.push_back(extent - size);
  return starts;
}

std::vector<Patch> crop_patches(const Image& tile, const Image& mask, std::int64_t size,
                                std::int64_t stride) {
  if (tile.width != mask.width || tile.height != mask.height) {
    throw ShapeError("tile and mask extents differ");
  }
  std::vector<Patch> out;
  for (std::int64_t y0 : window_starts(tile.height, size, stride)) {
    for (std::int64_t x0 : window_starts(tile.width, size, stride)) {
      Patch p{x0, y0, Image(size, size, tile.channels), Image(size, size, mask.channels)};
      for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
          for (std::int64_t c = 0; c < tile.channels; ++c) p.image.at(x, y, c) = tile.at(x0 + x, y0 + y, c);
          for (std::int64_t c = 0; c < mask.channels; ++c) p.mask.at(x, y, c) = mask.at(x0 + x, y0 + y, c);
        }
      out.push_back(std::move(p));
    }
  }
  return out;
}

// --- manifest ---------------------------------------------------------------

DatasetManifest DatasetManifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      key.erase(key.find_last_not_of(' ') + 1);
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "num_classes") m.num_classes = std::stoll(value);
        if (key == "patch_size") m.patch_size = std::stoll(value);
        if (key == "seed") m.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
      }
      continue;
    }
    std::istringstream fields(line);
    ManifestEntry e;
    if (!std::getline(fields, e.split, '\t') || !std::getline(fields, e.image, '\t') ||
        !std::getline(fields, e.mask, '\t')) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected split<TAB>image<TAB>mask");
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown split '" + e.split + "'");
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void DatasetManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path);
  out << "# num_classes=" << num_classes << "\n# patch_size=" << patch_size << "\n# seed=" << seed
      << "\n";
  for (const auto& e : entries) out << e.split << '\t' << e.image << '\t' << e.mask << '\n';
}

std::vector<ManifestEntry> DatasetManifest::split(std::string_view name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

std::string DatasetManifest::resolve(const std::string& relative) const {
  const fs::path p(relative);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

void DatasetManifest::validate() const {
  std::map<std::string, std::string> owner;
  for (const auto& e : entries) {
    for (const std::string* p : {&e.image, &e.mask}) {
      auto [it, fresh] = owner.emplace(*p, e.split);
      if (!fresh && it->second != e.split) {
        throw ConfigError("'" + *p + "' appears in splits " + it->second + " and " + e.split);
      }
    }
  }
}

std::vector<Sample> load_split(const DatasetManifest& manifest, std::string_view split) {
  std::vector<Sample> out;
  for (const auto& e : manifest.split(split)) {
    Sample s{read_pnm(manifest.resolve(e.image)), read_pnm(manifest.resolve(e.mask))};
    if (s.image.channels != 3) throw FormatError(e.image + ": tiles must be P6");
    if (s.mask.channels != 1) throw FormatError(e.mask + ": masks must be P5");
    if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
      throw ShapeError(e.image + " and " + e.mask + " differ in extents");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// --- synthetic scenes -------------------------------------------------------

bool Shape2D::contains(double x, double y) const {
  switch (kind) {
    case ShapeKind::rectangle: return x >= x0 && x < x1 && y >= y0 && y < y1;
    case ShapeKind::disk: return (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
    case ShapeKind::stripe:
      return std::abs((x - cx) * std::cos(angle) + (y - cy) * std::sin(angle)) < half_width;
  }
  return false;
}

std::array<std::uint8_t, 3> class_color(std::int64_t label) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> table{{
      {70, 70, 70}, {215, 60, 50}, {60, 190, 70}, {55, 90, 215},
      {220, 200, 60}, {190, 70, 200}, {60, 200, 200}, {240, 150, 90},
  }};
  if (label < static_cast<std::int64_t>(table.size())) return table[static_cast<std::size_t>(label)];
  const auto h = static_cast<std::uint64_t>(label) * 0x9E3779B97F4A7C15ULL;
  return {static_cast<std::uint8_t>(h >> 56), static_cast<std::uint8_t>(h >> 48),
          static_cast<std::uint8_t>(h >> 40)};
}

SynthScene render_scene(std::vector<Shape2D> shapes, std::int64_t size, std::uint64_t seed) {
  SynthScene s{std::move(shapes), Image(size, size, 3), Image(size, size, 1, 0)};
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x)
      for (const auto& sh : s.shapes)
        if (sh.contains(x + 0.5, y + 0.5)) s.mask.at(x, y) = sh.label;
  Rng rng(seed);
  constexpr double kTexture = 14.0;
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      const auto color = class_color(s.mask.at(x, y));
      for (int c = 0; c < 3; ++c) {
        const double v = color[static_cast<std::size_t>(c)] + kTexture * rng.normal();
        s.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return s;
}

SynthScene synth_scene(std::int64_t size, std::int64_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ContractError("synthetic scenes need at least two classes");
  if (size < 8) throw ContractError("synthetic scenes need size >= 8");
  Rng rng(seed);
  const double s = static_cast<double>(size);
  std::vector<Shape2D> shapes;
  const int count = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    Shape2D sh;
    sh.label = static_cast<std::uint8_t>(1 + rng.below(static_cast<std::uint64_t>(num_classes - 1)));
    sh.kind = static_cast<ShapeKind>(rng.below(3));
    switch (sh.kind) {
      case ShapeKind::rectangle: {
        const double w = rng.uniform(0.25, 0.5) * s, h = rng.uniform(0.25, 0.5) * s;
        sh.x0 = rng.uniform(0.0, s - w);
        sh.y0 = rng.uniform(0.0, s - h);
        sh.x1 = sh.x0 + w;
        sh.y1 = sh.y0 + h;
        break;
      }
      case ShapeKind::disk:
        sh.r = rng.uniform(0.14, 0.25) * s;
        sh.cx = rng.uniform(sh.r, s - sh.r);
        sh.cy = rng.uniform(sh.r, s - sh.r);
        break;
      case ShapeKind::stripe:
        sh.half_width = rng.uniform(0.07, 0.12) * s;
        sh.angle = rng.uniform(0.0, std::numbers::pi);
        sh.cx = rng.uniform(0.3, 0.7) * s;
        sh.cy = rng.uniform(0.3, 0.7) * s;
        break;
    }
    shapes.push_back(sh);
  }
  return render_scene(std::move(shapes), size, rng.next_u64());
}

DatasetManifest synth_shapes_dataset(const std::string& dir, std::int64_t n_images,
                                     std::int64_t size, std::int64_t num_classes,
                                     std::uint64_t seed) {
  if (n_images < 1) throw ContractError("n_images must be >= 1");
  fs::create_directories(dir);
  DatasetManifest m;
  m.num_classes = num_classes;
  m.patch_size = size;
  m.seed = seed;
  m.base_dir = dir;
  Rng rng(seed);
  for (std::int64_t i = 0; i < n_images; ++i) {
    const SynthScene scene = synth_scene(size, num_classes, rng.next_u64());
    char img[32], mask[32];
    std::snprintf(img, sizeof(img), "img_%03lld.ppm", static_cast<long long>(i));
    std::snprintf(mask, sizeof(mask), "mask_%03lld.pgm", static_cast<long long>(i));
    write_pnm((fs::path(dir) / img).string(), scene.image);
    write_pnm((fs::path(dir) / mask).string(), scene.mask);
    m.entries.push_back({i % 4 == 3 ? "val" : "train", img, mask});
  }
  m.write((fs::path(dir) / "manifest.tsv").string());
  return m;
}

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractError("images_to_tensor needs at least one image");
  const std::int64_t w = images[0]->width, h = images[0]->height;
  Tensor t({static_cast<std::int64_t>(images.size()), 3, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = *images[b];
    if (img.width != w || img.height != h || img.channels != 3) {
      throw ShapeError("batch images must share extents and have 3 channels");
    }
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          t.at(static_cast<std::int64_t>(b), c, y, x) = (img.at(x, y, c) / 255.0 - 0.5) / 0.25;
  }
  return t;
}

losses::Labels masks_to_labels(const std::vector<const Image*>& masks) {
  if (masks.empty()) throw ContractError("masks_to_labels needs at least one mask");
  losses::Labels y{static_cast<std::int64_t>(masks.size()), masks[0]->height, masks[0]->width, {}};
  for (const Image* m : masks) {
    if (m->width != y.width || m->height != y.height || m->channels != 1) {
      throw ShapeError("batch masks must share extents and have 1 channel");
    }
    y.values.insert(y.values.end(), m->samples.begin(), m->samples.end());
  }
  return y;
}

}  // namespace abcnet::io
