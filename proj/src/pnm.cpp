// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "abcnet/tensor.hpp"

namespace abcnet::io {

Image::Image(std::int64_t w, std::int64_t h, std::int64_t c, std::uint8_t fill)
    : width(w), height(h), channels(c) {
  if (w < 1 || h < 1 || (c != 1 && c != 3)) {
    throw ShapeError("image needs positive extents and 1 or 3 channels");
  }
  samples.assign(static_cast<std::size_t>(w * h * c), fill);
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("PNM supports 1 or 3 channels");
  if (static_cast<std::int64_t>(img.samples.size()) != img.width * img.height * img.channels) {
    throw FormatError("sample count does not match image extents");
  }
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.samples.begin(), img.samples.end());
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::int64_t integer(const char* what) {
    skip_space_and_comments();
    std::int64_t v = 0;
    int digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError(std::string("PNM ") + what + " is too large");
    }
    if (digits == 0) throw FormatError(std::string("PNM header: missing ") + what);
    return v;
  }

  /// The single whitespace byte that ends the header.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("PNM header must end with one whitespace byte");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM (expected P5 or P6 magic)");
  }
  const std::int64_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.advance(2);
  const std::int64_t w = r.integer("width");
  const std::int64_t h = r.integer("height");
  const std::int64_t maxval = r.integer("maxval");
  r.end_of_header();
  if (w < 1 || h < 1) throw FormatError("PNM extents must be positive");
  if (maxval < 1 || maxval > 255) {
    throw FormatError("only 8-bit PNM is supported (maxval " + std::to_string(maxval) + ")");
  }
  const std::size_t need = static_cast<std::size_t>(w * h * channels);
  if (bytes.size() - r.pos() < need) {
    throw FormatError("PNM payload truncated: " + std::to_string(bytes.size() - r.pos()) + " of " +
                      std::to_string(need) + " bytes");
  }
  Image img(w, h, channels);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()),
            bytes.begin() + static_cast<std::ptrdiff_t>(r.pos() + need), img.samples.begin());
  return img;
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_pnm(const std::string& path, const Image& img) {
  const std::vector<std::uint8_t> bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace abcnet::io
