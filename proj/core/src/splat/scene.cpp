// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/splat/scene.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "splatedit/common/error.hpp"

namespace splatedit::splat {

float sigmoid(float x) {
  if (x >= 0.f) return 1.f / (1.f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.f + e);
}

float logit(float p) { return std::log(p / (1.f - p)); }

std::array<float, 3> Gaussian::scale() const {
  return {std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])};
}

float Gaussian::opacity() const { return sigmoid(opacity_logit); }

SplatScene::SplatScene(int sh_degree) : sh_degree_(sh_degree) {
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw ContractError("SH degree " + std::to_string(sh_degree) + " outside [0, " + std::to_string(kMaxShDegree) + "]");
  }
}

void SplatScene::reserve(std::int64_t n) {
  const auto un = static_cast<std::size_t>(n);
  positions.reserve(3 * un);
  log_scales.reserve(3 * un);
  rotations.reserve(4 * un);
  opacity_logits.reserve(un);
  sh.reserve(un * static_cast<std::size_t>(3 * coeffs()));
}

void SplatScene::push_back(const Gaussian& g) {
  if (static_cast<int>(g.sh.size()) != 3 * coeffs()) {
    throw ContractError("Gaussian has " + std::to_string(g.sh.size()) + " SH values, scene expects " +
                        std::to_string(3 * coeffs()));
  }
  positions.insert(positions.end(), g.position.begin(), g.position.end());
  log_scales.insert(log_scales.end(), g.log_scale.begin(), g.log_scale.end());
  rotations.insert(rotations.end(), g.rotation.begin(), g.rotation.end());
  opacity_logits.push_back(g.opacity_logit);
  sh.insert(sh.end(), g.sh.begin(), g.sh.end());
}

Gaussian SplatScene::gaussian(std::int64_t i) const {
  const auto u = static_cast<std::size_t>(i);
  Gaussian g;
  for (std::size_t a = 0; a < 3; ++a) {
    g.position[a] = positions[3 * u + a];
    g.log_scale[a] = log_scales[3 * u + a];
  }
  for (std::size_t a = 0; a < 4; ++a) g.rotation[a] = rotations[4 * u + a];
  g.opacity_logit = opacity_logits[u];
  const auto n = static_cast<std::size_t>(3 * coeffs());
  g.sh.assign(sh.begin() + static_cast<std::ptrdiff_t>(n * u), sh.begin() + static_cast<std::ptrdiff_t>(n * (u + 1)));
  return g;
}

Vec3 SplatScene::position(std::int64_t i) const {
  const auto u = static_cast<std::size_t>(i);
  return {positions[3 * u], positions[3 * u + 1], positions[3 * u + 2]};
}

void SplatScene::append_from(const SplatScene& other, std::int64_t i) {
  if (other.sh_degree_ != sh_degree_) throw ContractError("append_from: SH degree differs");
  const auto u = static_cast<std::size_t>(i);
  positions.insert(positions.end(), other.positions.begin() + 3 * u, other.positions.begin() + 3 * u + 3);
  log_scales.insert(log_scales.end(), other.log_scales.begin() + 3 * u, other.log_scales.begin() + 3 * u + 3);
  rotations.insert(rotations.end(), other.rotations.begin() + 4 * u, other.rotations.begin() + 4 * u + 4);
  opacity_logits.push_back(other.opacity_logits[u]);
  const auto n = static_cast<std::size_t>(3 * coeffs());
  sh.insert(sh.end(), other.sh.begin() + static_cast<std::ptrdiff_t>(n * u),
            other.sh.begin() + static_cast<std::ptrdiff_t>(n * (u + 1)));
}

SplatScene SplatScene::subset(const std::vector<std::int64_t>& indices) const {
  SplatScene out(sh_degree_);
  out.reserve(static_cast<std::int64_t>(indices.size()));
  for (auto i : indices) out.append_from(*this, i);
  return out;
}

Aabb SplatScene::bounds() const {
  Aabb box;
  if (empty()) return box;
  for (std::size_t a = 0; a < 3; ++a) {
    box.min[a] = std::numeric_limits<double>::infinity();
    box.max[a] = -std::numeric_limits<double>::infinity();
  }
  for (std::int64_t i = 0; i < size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double p = positions[3 * static_cast<std::size_t>(i) + a];
      box.min[a] = std::min(box.min[a], p);
      box.max[a] = std::max(box.max[a], p);
    }
  }
  return box;
}

void SplatScene::validate() const {
  const auto n = static_cast<std::size_t>(size());
  if (positions.size() != 3 * n || log_scales.size() != 3 * n || rotations.size() != 4 * n ||
      sh.size() != n * static_cast<std::size_t>(3 * coeffs())) {
    throw ContractError("scene arrays have inconsistent lengths");
  }
  auto finite = [](const std::vector<float>& v, std::size_t b, std::size_t e) {
    for (auto i = b; i < e; ++i) {
      if (!std::isfinite(v[i])) return false;
    }
    return true;
  };
  const auto c3 = static_cast<std::size_t>(3 * coeffs());
  for (std::size_t i = 0; i < n; ++i) {
    if (!finite(positions, 3 * i, 3 * i + 3) || !finite(log_scales, 3 * i, 3 * i + 3) ||
        !finite(rotations, 4 * i, 4 * i + 4) || !std::isfinite(opacity_logits[i]) ||
        !finite(sh, c3 * i, c3 * (i + 1))) {
      throw ContractError("non-finite attribute on Gaussian " + std::to_string(i));
    }
    double qn = 0.0;
    for (std::size_t a = 0; a < 4; ++a) qn += double(rotations[4 * i + a]) * rotations[4 * i + a];
    if (qn == 0.0) throw ContractError("zero quaternion on Gaussian " + std::to_string(i));
  }
}

Mat3 quat_to_rotmat(const std::array<double, 4>& q) {
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(n > 0.0)) throw ContractError("quat_to_rotmat: zero quaternion");
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

std::array<double, 3> eval_sh_color(const Gaussian& g, int stored_degree, const Vec3& view_dir, int degree) {
  if (degree < 0) degree = stored_degree;
  if (degree > stored_degree || degree > kMaxShDegree) {
    throw ContractError("eval_sh_color: degree " + std::to_string(degree) + " exceeds stored degree " +
                        std::to_string(stored_degree));
  }
  if (static_cast<int>(g.sh.size()) != 3 * sh_coeff_count(stored_degree)) {
    throw ContractError("eval_sh_color: coefficient count does not match degree");
  }
  double basis[sh_coeff_count(kMaxShDegree)];
  sh_basis(degree, view_dir[0], view_dir[1], view_dir[2], basis);
  std::array<double, 3> rgb{0.5, 0.5, 0.5};
  for (int k = 0; k < sh_coeff_count(degree); ++k) {
    for (std::size_t c = 0; c < 3; ++c) rgb[c] += basis[k] * g.sh[static_cast<std::size_t>(3 * k) + c];
  }
  return rgb;
}

}  // namespace splatedit::splat
