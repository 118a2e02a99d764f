// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splatedit::io {

/// Interleaved float image, row-major from the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// 8-bit PNG. Values are treated as already display-encoded and quantised
/// with round(clamp(v, 0, 1) * 255). 1, 3 and 4 channel images are supported.
std::vector<std::uint8_t> encode_png(const Image& img);
void save_png(const std::string& path, const Image& img);
/// Decodes to RGB (alpha dropped, gray expanded) with values k / 255.
Image decode_png(const std::vector<std::uint8_t>& bytes);
Image load_png(const std::string& path);

/// Lossless float dump: "SPLTIMG\0", u32 version (1), u32 width, height,
/// channels, then width*height*channels f32.
void save_raw(const std::string& path, const Image& img);
Image load_raw(const std::string& path);

}  // namespace splatedit::io
