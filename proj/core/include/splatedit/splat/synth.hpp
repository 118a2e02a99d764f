// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "splatedit/common/rng.hpp"
#include "splatedit/splat/scene.hpp"

namespace splatedit::splat {

enum class PrimitiveKind { kSphere, kBox };
enum class Texture { kSolid, kChecker, kStripes };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center{0.0, 0.0, 0.0};
  double radius = 0.5;                   // sphere
  Vec3 half_extent{0.4, 0.4, 0.4};       // box, axis aligned before yaw
  double yaw_deg = 0.0;                  // box rotation about +y
  Texture texture = Texture::kSolid;
  double period = 0.25;                  // full texture period in world units
  std::array<double, 3> color_a{0.8, 0.3, 0.2};
  std::array<double, 3> color_b{0.2, 0.5, 0.8};
};

struct SynthSpec {
  std::vector<Primitive> primitives;
  double spacing = 0.04;      // mean distance between surface samples
  double opacity = 0.95;
  int sh_degree = 3;
};

/// Surface-sampled Gaussians: flat discs tangent to the surface, colour from
/// the primitive's texture in the DC coefficient, higher SH bands zero.
/// Deterministic given (spec, seed); the seed only jitters sample positions.
SplatScene synth_scene(const SynthSpec& spec, std::uint64_t seed);

/// Random one-to-three primitive spec fitting inside a radius-0.95 ball.
SynthSpec random_synth_spec(Rng& rng, int sh_degree = 3, double spacing = 0.04);

/// Texture colour at a point on a primitive's surface (used by tests).
std::array<double, 3> texture_color(const Primitive& p, const Vec3& surface_point);

/// SH DC coefficient that renders as `rgb` under the +0.5 offset.
inline double rgb_to_dc(double rgb) { return (rgb - 0.5) / sh_const::C0; }

}  // namespace splatedit::splat
