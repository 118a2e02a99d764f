// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "splatedit/voxel/grid.hpp"

namespace splatedit::testing {

/// Ray/box slab test; returns the entry parameter clipped to t >= 0, or +inf.
inline double ray_box_entry(const splat::Aabb& box, const Vec3& o, const Vec3& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double t0 = 0.0, t1 = inf;
  for (std::size_t a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return inf;
      continue;
    }
    const double ta = (box.min[a] - o[a]) / d[a], tb = (box.max[a] - o[a]) / d[a];
    t0 = std::max(t0, std::min(ta, tb));
    t1 = std::min(t1, std::max(ta, tb));
  }
  return t0 <= t1 ? t0 : inf;
}

/// Intersects the ray with every occupied cell box and keeps the nearest entry.
inline voxel::CellId brute_force_first_hit(const voxel::VoxelGrid& grid, const std::vector<std::uint8_t>& occupied,
                                           const Vec3& o, const Vec3& d) {
  double best = std::numeric_limits<double>::infinity();
  voxel::CellId hit = -1;
  for (voxel::CellId id = 0; id < grid.cell_count(); ++id) {
    if (!occupied[static_cast<std::size_t>(id)]) continue;
    const double t = ray_box_entry(grid.cell_box(id), o, d);
    if (t < best) {
      best = t;
      hit = id;
    }
  }
  return hit;
}

}  // namespace splatedit::testing
