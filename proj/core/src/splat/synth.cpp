// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/splat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splatedit/common/error.hpp"

namespace splatedit::splat {
namespace {

constexpr double kPi = std::numbers::pi;

// Quaternion (w, x, y, z) rotating +z onto unit vector n.
std::array<float, 4> align_z(const Vec3& n) {
  if (n[2] < -1.0 + 1e-9) return {0.f, 1.f, 0.f, 0.f};
  const double w = 1.0 + n[2];
  const double x = -n[1], y = n[0];
  const double len = std::sqrt(w * w + x * x + y * y);
  return {static_cast<float>(w / len), static_cast<float>(x / len), static_cast<float>(y / len), 0.f};
}

Vec3 yaw(const Vec3& v, double deg) {
  const double a = deg * kPi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  return {c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]};
}

bool parity(double u, double half) { return (static_cast<long long>(std::floor(u / half)) & 1LL) != 0; }

std::array<double, 3> pattern(const Primitive& p, double u, double v) {
  const double half = 0.5 * p.period;
  switch (p.texture) {
    case Texture::kSolid:
      return p.color_a;
    case Texture::kChecker:
      return parity(u, half) != parity(v, half) ? p.color_b : p.color_a;
    case Texture::kStripes:
      return parity(v, half) ? p.color_b : p.color_a;
  }
  return p.color_a;
}

struct Sample {
  Vec3 position;
  Vec3 normal;
};

std::vector<Sample> sample_sphere(const Primitive& p, double spacing, Rng& rng) {
  const double area = 4.0 * kPi * p.radius * p.radius;
  const auto n = std::max<std::int64_t>(8, static_cast<std::int64_t>(area / (spacing * spacing)));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::int64_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double th = golden * static_cast<double>(i) + rng.uniform(-0.2, 0.2);
    const Vec3 nrm{r * std::sin(th), y, r * std::cos(th)};
    out.push_back({p.center + nrm * p.radius, nrm});
  }
  return out;
}

std::vector<Sample> sample_box(const Primitive& p, double spacing, Rng& rng) {
  std::vector<Sample> out;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const auto u1 = static_cast<std::size_t>(a1), u2 = static_cast<std::size_t>(a2), ua = static_cast<std::size_t>(axis);
    const auto n1 = std::max<std::int64_t>(2, std::llround(2.0 * p.half_extent[u1] / spacing));
    const auto n2 = std::max<std::int64_t>(2, std::llround(2.0 * p.half_extent[u2] / spacing));
    for (int side = -1; side <= 1; side += 2) {
      for (std::int64_t i = 0; i < n1; ++i) {
        for (std::int64_t j = 0; j < n2; ++j) {
          Vec3 local{};
          local[ua] = side * p.half_extent[ua];
          const double j1 = rng.uniform(-0.25, 0.25), j2 = rng.uniform(-0.25, 0.25);
          local[u1] = (-1.0 + (2.0 * (static_cast<double>(i) + 0.5 + j1)) / static_cast<double>(n1)) * p.half_extent[u1];
          local[u2] = (-1.0 + (2.0 * (static_cast<double>(j) + 0.5 + j2)) / static_cast<double>(n2)) * p.half_extent[u2];
          Vec3 nrm{};
          nrm[ua] = side;
          out.push_back({p.center + yaw(local, p.yaw_deg), yaw(nrm, p.yaw_deg)});
        }
      }
    }
  }
  return out;
}

}  // namespace

std::array<double, 3> texture_color(const Primitive& p, const Vec3& surface_point) {
  if (p.kind == PrimitiveKind::kSphere) {
    const Vec3 d = surface_point - p.center;
    const double r = norm(d);
    const double lon = std::atan2(d[0], d[2]) * p.radius;
    const double lat = std::asin(std::clamp(d[1] / std::max(r, 1e-12), -1.0, 1.0)) * p.radius;
    return pattern(p, lon, lat);
  }
  // Box: coordinates in the face plane, in the box's local frame.
  const Vec3 local = yaw(surface_point - p.center, -p.yaw_deg);
  int axis = 0;
  double best = -1.0;
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double rel = std::abs(local[ua]) / std::max(p.half_extent[ua], 1e-12);
    if (rel > best) {
      best = rel;
      axis = a;
    }
  }
  const auto u1 = static_cast<std::size_t>((axis + 1) % 3), u2 = static_cast<std::size_t>((axis + 2) % 3);
  return pattern(p, local[u1] + p.half_extent[u1], local[u2] + p.half_extent[u2]);
}

SplatScene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
  if (!(spec.spacing > 0.0)) throw ContractError("synth_scene: spacing must be positive");
  if (!(spec.opacity > 0.0 && spec.opacity < 1.0)) throw ContractError("synth_scene: opacity must be in (0, 1)");
  SplatScene scene(spec.sh_degree);
  const int coeffs = scene.coeffs();
  Rng rng = Rng::stream(seed, 0x5EED);
  const float tangent = static_cast<float>(std::log(0.6 * spec.spacing));
  const float normal = static_cast<float>(std::log(0.08 * spec.spacing));
  for (const auto& prim : spec.primitives) {
    const auto samples =
        prim.kind == PrimitiveKind::kSphere ? sample_sphere(prim, spec.spacing, rng) : sample_box(prim, spec.spacing, rng);
    for (const auto& s : samples) {
      Gaussian g;
      for (std::size_t a = 0; a < 3; ++a) g.position[a] = static_cast<float>(s.position[a]);
      g.log_scale = {tangent, tangent, normal};
      g.rotation = align_z(s.normal);
      g.opacity_logit = logit(static_cast<float>(spec.opacity));
      g.sh.assign(static_cast<std::size_t>(3 * coeffs), 0.f);
      const auto rgb = texture_color(prim, s.position);
      for (std::size_t c = 0; c < 3; ++c) g.sh[c] = static_cast<float>(rgb_to_dc(rgb[c]));
      scene.push_back(g);
    }
  }
  return scene;
}

SynthSpec random_synth_spec(Rng& rng, int sh_degree, double spacing) {
  SynthSpec spec;
  spec.sh_degree = sh_degree;
  spec.spacing = spacing;
  const int n = 1 + static_cast<int>(rng.below(3));
  auto color = [&]() {
    return std::array<double, 3>{rng.uniform(0.12, 0.95), rng.uniform(0.12, 0.95), rng.uniform(0.12, 0.95)};
  };
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? PrimitiveKind::kSphere : PrimitiveKind::kBox;
    const double size = n == 1 ? rng.uniform(0.45, 0.7) : rng.uniform(0.25, 0.45);
    const double spread = n == 1 ? 0.1 : 0.4;
    p.center = {rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread)};
    p.radius = size;
    p.half_extent = {size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0)};
    p.yaw_deg = rng.uniform(0.0, 90.0);
    p.texture = static_cast<Texture>(rng.below(3));
    p.period = rng.uniform(0.18, 0.45);
    p.color_a = color();
    p.color_b = color();
    if (p.kind == PrimitiveKind::kBox && norm(p.half_extent) > 0.9) p.half_extent = p.half_extent * (0.9 / norm(p.half_extent));
    // Keep the primitive inside the 0.95 ball the cameras are framed for.
    const double reach = norm(p.center) + (p.kind == PrimitiveKind::kSphere ? p.radius : norm(p.half_extent));
    if (reach > 0.95) p.center = p.center * std::max(0.0, (0.95 - (reach - norm(p.center))) / std::max(norm(p.center), 1e-9));
    spec.primitives.push_back(p);
  }
  return spec;
}

}  // namespace splatedit::splat
