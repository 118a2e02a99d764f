// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "splatedit/common/vec.hpp"
#include "splatedit/splat/sh.hpp"

namespace splatedit::splat {

struct Aabb {
  Vec3 min{0.0, 0.0, 0.0};
  Vec3 max{0.0, 0.0, 0.0};

  bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a) {
      if (p[static_cast<std::size_t>(a)] < min[static_cast<std::size_t>(a)] ||
          p[static_cast<std::size_t>(a)] > max[static_cast<std::size_t>(a)]) {
        return false;
      }
    }
    return true;
  }
};

/// One Gaussian in stored form: log-scales, raw (w,x,y,z) quaternion, opacity
/// logit, and SH coefficients laid out coefficient-major, channel-minor.
struct Gaussian {
  std::array<float, 3> position{};
  std::array<float, 3> log_scale{};
  std::array<float, 4> rotation{1.f, 0.f, 0.f, 0.f};
  float opacity_logit = 0.f;
  std::vector<float> sh;

  std::array<float, 3> scale() const;
  float opacity() const;
};

float sigmoid(float x);
float logit(float p);

/// Gaussians in structure-of-arrays form. Index order is identity: index i is
/// the same Gaussian in every array.
class SplatScene {
 public:
  SplatScene() = default;
  explicit SplatScene(int sh_degree);

  int sh_degree() const noexcept { return sh_degree_; }
  int coeffs() const noexcept { return sh_coeff_count(sh_degree_); }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(opacity_logits.size()); }
  bool empty() const noexcept { return opacity_logits.empty(); }

  void reserve(std::int64_t n);
  void push_back(const Gaussian& g);
  Gaussian gaussian(std::int64_t i) const;
  Vec3 position(std::int64_t i) const;
  float opacity(std::int64_t i) const { return sigmoid(opacity_logits[static_cast<std::size_t>(i)]); }

  /// Appends Gaussian i of `other` (same SH degree) unchanged.
  void append_from(const SplatScene& other, std::int64_t i);
  /// New scene holding the given indices in the given order.
  SplatScene subset(const std::vector<std::int64_t>& indices) const;

  /// Tight box around all positions; a zero box for an empty scene.
  Aabb bounds() const;
  /// Throws ContractError if any Gaussian violates the stored-form invariants
  /// or any attribute is non-finite.
  void validate() const;

  std::vector<float> positions;       // N x 3
  std::vector<float> log_scales;      // N x 3
  std::vector<float> rotations;       // N x 4, (w, x, y, z)
  std::vector<float> opacity_logits;  // N
  std::vector<float> sh;              // N x coeffs x 3

 private:
  int sh_degree_ = 0;
};

/// Rotation matrix (row-major) of q normalised; ContractError if q is zero.
Mat3 quat_to_rotmat(const std::array<double, 4>& q);

/// Sum of c_k Y_k(dir) + 0.5 per channel, unclamped. `degree` defaults to the
/// scene's degree; a larger degree is a ContractError.
std::array<double, 3> eval_sh_color(const Gaussian& g, int stored_degree, const Vec3& view_dir, int degree = -1);

}  // namespace splatedit::splat
