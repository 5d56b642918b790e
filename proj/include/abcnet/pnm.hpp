// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace abcnet::io {

/// 8-bit raster, samples interleaved per pixel, rows top to bottom.
/// Three channels for tiles (P6), one for label masks (P5).
struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t channels = 0;
  std::vector<std::uint8_t> samples;

  Image() = default;
  Image(std::int64_t w, std::int64_t h, std::int64_t c, std::uint8_t fill = 0);

  std::uint8_t& at(std::int64_t x, std::int64_t y, std::int64_t c = 0) {
    return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t c = 0) const {
    return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

std::vector<std::uint8_t> encode_pnm(const Image& img);
/// Accepts P5 and P6 with maxval <= 255 and '#' comments in the header.
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& img);

}  // namespace abcnet::io
