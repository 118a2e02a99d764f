// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace splatedit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an API call was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A file is well formed but lacks required content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed. Carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class RenderError : public Error {
 public:
  RenderError(const std::string& what, std::int64_t gaussian_index)
      : Error(what + " (gaussian " + std::to_string(gaussian_index) + ")"), index_(gaussian_index) {}
  std::int64_t gaussian_index() const noexcept { return index_; }

 private:
  std::int64_t index_;
};

}  // namespace splatedit
