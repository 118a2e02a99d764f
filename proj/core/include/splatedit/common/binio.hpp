// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "splatedit/common/error.hpp"

// Little-endian binary readers/writers shared by the on-disk formats.
namespace splatedit::io {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw Error("cannot open " + path + " for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error("write failed: " + path_);
  }
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    bytes(&v, sizeof(T));
  }
  template <class T>
  void array(std::span<const T> v) {
    bytes(v.data(), v.size_bytes());
  }
  void str32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw Error("close failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

/// Reads a whole file into memory and decodes from it; errors carry offsets.
class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  explicit BinaryReader(std::vector<char> data, std::string name = "<memory>")
      : path_(std::move(name)), data_(std::move(data)) {}

  void bytes(void* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw ParseError("unexpected end of file in " + path_, pos_);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  template <class T>
  std::vector<T> array(std::size_t n) {
    if (n > (data_.size() - pos_) / sizeof(T)) throw ParseError("array runs past end of " + path_, pos_);
    std::vector<T> v(n);
    bytes(v.data(), n * sizeof(T));
    return v;
  }
  std::string str32() {
    const auto n = get<std::uint32_t>();
    if (n > data_.size() - pos_) throw ParseError("string runs past end of " + path_, pos_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    bytes(got.data(), magic.size());
    if (got != magic) throw ParseError(path_ + ": bad magic, expected " + std::string(magic.data()), 0);
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  const std::string& name() const noexcept { return path_; }

 private:
  std::string path_;
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

/// FNV-1a over a file's bytes, used to tie snapshots to their base latents.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::uint64_t fnv1a(std::span<const char> bytes) { return fnv1a(bytes.data(), bytes.size()); }

}  // namespace splatedit::io
