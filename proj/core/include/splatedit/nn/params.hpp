// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "splatedit/ad/checkpoint.hpp"
#include "splatedit/ad/tape.hpp"
#include "splatedit/common/rng.hpp"

namespace splatedit::nn {

using Param = ad::Parameter<float>;

struct Init {
  enum Kind { kZeros, kOnes, kNormal, kConstant } kind = kZeros;
  double value = 0.0;  // stddev for kNormal, fill for kConstant

  static Init zeros() { return {kZeros, 0.0}; }
  static Init ones() { return {kOnes, 1.0}; }
  static Init normal(double stddev) { return {kNormal, stddev}; }
  static Init constant(double v) { return {kConstant, v}; }
};

/// Named parameters with stable addresses. Names are dotted paths
/// ("lrm.block0.attn.q.w"); prefixes select sub-models.
class ParamStore {
 public:
  Param& create(const std::string& name, ad::Shape shape, Init init, Rng& rng);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Parameters whose name starts with `prefix`, in creation order.
  std::vector<Param*> parameters(const std::string& prefix = "");
  std::int64_t numel(const std::string& prefix = "") const;
  void set_trainable(const std::string& prefix, bool trainable);
  void zero_grad(const std::string& prefix = "");

  ad::NamedTensors state(const std::string& prefix = "") const;
  /// Loads every tensor named under `prefix`; unknown names or shape
  /// mismatches are FormatErrors. With `strict`, every parameter under the
  /// prefix must be present.
  void load_state(const ad::NamedTensors& tensors, const std::string& prefix = "", bool strict = true);
  void save(const std::string& path, const std::string& prefix = "") const;
  void load(const std::string& path, const std::string& prefix = "", bool strict = true);

  /// Hash of all values under `prefix`, for freeze checks.
  std::uint64_t fingerprint(const std::string& prefix = "") const;

 private:
  std::deque<Param> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace splatedit::nn
