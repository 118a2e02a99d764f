// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/common/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "splatedit/common/binio.hpp"
#include "splatedit/common/error.hpp"

namespace splatedit::io {

namespace {

void check_shape(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw ContractError("image must be at least 1x1");
  if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
    throw ContractError("unsupported channel count " + std::to_string(img.channels));
  }
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw ShapeError("image buffer does not match its dimensions");
  }
}

std::uint8_t quantise(float v) {
  if (!(v > 0.f)) return 0;
  if (v >= 1.f) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.f));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  check_shape(img);
  std::vector<std::uint8_t> pixels(img.data.size());
  std::transform(img.data.begin(), img.data.end(), pixels.begin(), quantise);
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 1 ? PNG_FORMAT_GRAY : img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + pi.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + pi.message);
  }
  out.resize(size);
  return out;
}

void save_png(const std::string& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path);
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    throw FormatError(std::string("invalid png: ") + pi.message);
  }
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("invalid png: ") + pi.message);
  }
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height), 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) img.data[i] = static_cast<float>(pixels[i]) / 255.f;
  return img;
}

Image load_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void save_raw(const std::string& path, const Image& img) {
  check_shape(img);
  BinaryWriter w(path);
  w.bytes("SPLTIMG\0", 8);
  w.put<std::uint32_t>(1);
  w.put(static_cast<std::uint32_t>(img.width));
  w.put(static_cast<std::uint32_t>(img.height));
  w.put(static_cast<std::uint32_t>(img.channels));
  w.array(std::span<const float>(img.data));
  w.close();
}

Image load_raw(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(std::string("SPLTIMG\0", 8));
  const auto version = r.get<std::uint32_t>();
  if (version != 1) throw ParseError(path + ": unsupported image version", 8);
  Image img;
  img.width = static_cast<int>(r.get<std::uint32_t>());
  img.height = static_cast<int>(r.get<std::uint32_t>());
  img.channels = static_cast<int>(r.get<std::uint32_t>());
  img.data = r.array<float>(static_cast<std::size_t>(img.width) * img.height * img.channels);
  if (!r.at_end()) throw ParseError(path + ": trailing bytes", r.offset());
  return img;
}

}  // namespace splatedit::io
