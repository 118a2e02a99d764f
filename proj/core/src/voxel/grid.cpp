// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/voxel/grid.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "splatedit/common/error.hpp"

namespace splatedit::voxel {

std::array<int, 3> VoxelGrid::coords(CellId id) const {
  const CellId r = resolution;
  return {static_cast<int>(id % r), static_cast<int>((id / r) % r), static_cast<int>(id / (r * r))};
}

CellId VoxelGrid::cell_at(const Vec3& p) const {
  int c[3];
  for (std::size_t a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - bounds.min[a]) / cell_size[a]);
    c[a] = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(resolution - 1)));
  }
  return cell_id(c[0], c[1], c[2]);
}

Vec3 VoxelGrid::cell_center(CellId id) const {
  const auto c = coords(id);
  Vec3 out;
  for (std::size_t a = 0; a < 3; ++a) out[a] = bounds.min[a] + (c[a] + 0.5) * cell_size[a];
  return out;
}

splat::Aabb VoxelGrid::cell_box(CellId id) const {
  const auto c = coords(id);
  splat::Aabb box;
  for (std::size_t a = 0; a < 3; ++a) {
    box.min[a] = bounds.min[a] + c[a] * cell_size[a];
    box.max[a] = bounds.min[a] + (c[a] + 1) * cell_size[a];
  }
  return box;
}

std::int64_t VoxelGrid::group_index(CellId id) const {
  const auto it = std::lower_bound(cells.begin(), cells.end(), id);
  if (it == cells.end() || *it != id) return -1;
  return it - cells.begin();
}

VoxelGrid make_grid(const splat::Aabb& bounds, int resolution) {
  if (resolution < 1) throw ContractError("voxel resolution must be positive");
  VoxelGrid grid;
  grid.resolution = resolution;
  grid.bounds = bounds;
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(grid.bounds.max[a] > grid.bounds.min[a])) {
      grid.bounds.min[a] -= 1e-3;
      grid.bounds.max[a] = std::max(grid.bounds.max[a], grid.bounds.min[a] + 1e-3) + 1e-3;
      grid.bounds_expanded = true;
    }
    grid.cell_size[a] = (grid.bounds.max[a] - grid.bounds.min[a]) / resolution;
  }
  if (grid.bounds_expanded) spdlog::warn("voxelize: degenerate bounds widened by 1e-3");
  return grid;
}

VoxelGrid voxelize(const std::vector<Vec3>& positions, int resolution, const std::optional<splat::Aabb>& bounds) {
  splat::Aabb box;
  if (bounds) {
    box = *bounds;
  } else if (!positions.empty()) {
    box.min = box.max = positions[0];
    for (const auto& p : positions) {
      for (std::size_t a = 0; a < 3; ++a) {
        box.min[a] = std::min(box.min[a], p[a]);
        box.max[a] = std::max(box.max[a], p[a]);
      }
    }
  }
  VoxelGrid grid = make_grid(box, resolution);
  const auto n = positions.size();
  grid.cell_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid.cell_of[i] = grid.cell_at(positions[i]);

  // Stable sort by cell keeps ascending Gaussian order inside each group.
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return grid.cell_of[static_cast<std::size_t>(a)] < grid.cell_of[static_cast<std::size_t>(b)];
  });
  for (auto i : order) {
    const CellId c = grid.cell_of[static_cast<std::size_t>(i)];
    if (grid.cells.empty() || grid.cells.back() != c) {
      grid.cells.push_back(c);
      grid.groups.emplace_back();
    }
    grid.groups.back().push_back(i);
  }

  std::size_t total = 0;
  for (const auto& g : grid.groups) total += g.size();
  if (total != n) throw ContractError("voxelize: groups do not partition the Gaussians");
  return grid;
}

VoxelGrid voxelize(const splat::SplatScene& scene, int resolution, const std::optional<splat::Aabb>& bounds) {
  std::vector<Vec3> pos(static_cast<std::size_t>(scene.size()));
  for (std::int64_t i = 0; i < scene.size(); ++i) pos[static_cast<std::size_t>(i)] = scene.position(i);
  return voxelize(pos, resolution, bounds ? bounds : std::optional<splat::Aabb>(scene.bounds()));
}

VoxelGrid voxelize(const splat::SplatScene& scene, const ad::TensorF& features, int resolution,
                   const std::optional<splat::Aabb>& bounds) {
  if (features.rank() != 2 || features.rows() != scene.size()) {
    throw ContractError("voxelize: features " + ad::shape_str(features.shape()) + " for " +
                        std::to_string(scene.size()) + " Gaussians");
  }
  return voxelize(scene, resolution, bounds);
}

std::int64_t topk_count(std::int64_t n, double fraction) {
  return std::max<std::int64_t>(static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(n))), 1);
}

std::vector<std::int64_t> topk_indices(const std::vector<std::int64_t>& group, const std::vector<float>& opacities,
                                       double fraction) {
  if (group.empty()) throw ContractError("topk_indices: empty group");
  std::vector<std::int64_t> sorted = group;
  const auto k = static_cast<std::size_t>(std::min<std::int64_t>(topk_count(static_cast<std::int64_t>(group.size()), fraction),
                                                                   static_cast<std::int64_t>(group.size())));
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    [&](std::int64_t a, std::int64_t b) {
                      const float oa = opacities[static_cast<std::size_t>(a)];
                      const float ob = opacities[static_cast<std::size_t>(b)];
                      return oa > ob || (oa == ob && a < b);
                    });
  sorted.resize(k);
  return sorted;
}

std::vector<std::int64_t> PackedSequences::bounds() const {
  std::vector<std::int64_t> out = offsets;
  out.push_back(total());
  return out;
}

void PackedSequences::validate() const {
  if (offsets.size() != lengths.size()) throw ContractError("packed: offsets and lengths differ in count");
  if (dim < 0 || (dim > 0 && tokens.size() % static_cast<std::size_t>(dim) != 0)) {
    throw ContractError("packed: token buffer is not a whole number of rows");
  }
  std::int64_t at = 0;
  for (std::size_t g = 0; g < offsets.size(); ++g) {
    if (offsets[g] != at || lengths[g] < 1) {
      throw ContractError("packed: group " + std::to_string(g) + " offset/length inconsistent");
    }
    at += lengths[g];
  }
  if (at != total()) throw ContractError("packed: lengths do not sum to the token count");
}

PackedSequences pack(const std::vector<std::vector<std::int64_t>>& groups, const ad::TensorF& tokens) {
  if (tokens.rank() != 2) throw ShapeError("pack: tokens must be a matrix");
  PackedSequences out;
  out.dim = tokens.cols();
  const auto d = static_cast<std::size_t>(out.dim);
  std::int64_t at = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw ContractError("pack: empty group");
    out.offsets.push_back(at);
    out.lengths.push_back(static_cast<std::int64_t>(g.size()));
    for (auto i : g) {
      if (i < 0 || i >= tokens.rows()) throw ContractError("pack: index " + std::to_string(i) + " out of range");
      const float* row = tokens.ptr() + static_cast<std::size_t>(i) * d;
      out.tokens.insert(out.tokens.end(), row, row + d);
    }
    at += static_cast<std::int64_t>(g.size());
  }
  return out;
}

ad::TensorF unpack(const PackedSequences& packed, const std::vector<std::vector<std::int64_t>>& groups,
                   std::int64_t n) {
  packed.validate();
  if (groups.size() != packed.lengths.size()) throw ContractError("unpack: group count mismatch");
  const auto d = static_cast<std::size_t>(packed.dim);
  ad::TensorF out(ad::Shape{n, packed.dim});
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (static_cast<std::int64_t>(groups[g].size()) != packed.lengths[g]) {
      throw ContractError("unpack: group " + std::to_string(g) + " length mismatch");
    }
    for (std::size_t j = 0; j < groups[g].size(); ++j) {
      const auto i = groups[g][j];
      if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)]) {
        throw ContractError("unpack: index " + std::to_string(i) + " invalid or repeated");
      }
      seen[static_cast<std::size_t>(i)] = 1;
      const float* src = packed.tokens.data() + (static_cast<std::size_t>(packed.offsets[g]) + j) * d;
      std::copy(src, src + d, out.ptr() + static_cast<std::size_t>(i) * d);
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ContractError("unpack: rows left uncovered");
  return out;
}

std::vector<std::uint8_t> occupancy(const VoxelGrid& grid, const std::vector<float>& opacities, double threshold) {
  if (static_cast<std::int64_t>(opacities.size()) != grid.gaussian_count()) {
    throw ContractError("occupancy: one opacity per Gaussian required");
  }
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(grid.cell_count()), 0);
  for (std::size_t i = 0; i < opacities.size(); ++i) {
    if (opacities[i] > threshold) occ[static_cast<std::size_t>(grid.cell_of[i])] = 1;
  }
  return occ;
}

CellId first_hit(const VoxelGrid& grid, const std::vector<std::uint8_t>& occupied, const Vec3& origin,
                 const Vec3& dir) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double t0 = 0.0, t1 = inf;
  for (std::size_t a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < grid.bounds.min[a] || origin[a] > grid.bounds.max[a]) return -1;
      continue;
    }
    double ta = (grid.bounds.min[a] - origin[a]) / dir[a];
    double tb = (grid.bounds.max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return -1;

  const int res = grid.resolution;
  int cell[3], step[3];
  double t_max[3], t_delta[3];
  for (std::size_t a = 0; a < 3; ++a) {
    const double p = origin[a] + t0 * dir[a];
    const double f = std::floor((p - grid.bounds.min[a]) / grid.cell_size[a]);
    cell[a] = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(res - 1)));
    if (dir[a] > 0) {
      step[a] = 1;
      t_max[a] = (grid.bounds.min[a] + (cell[a] + 1) * grid.cell_size[a] - origin[a]) / dir[a];
      t_delta[a] = grid.cell_size[a] / dir[a];
    } else if (dir[a] < 0) {
      step[a] = -1;
      t_max[a] = (grid.bounds.min[a] + cell[a] * grid.cell_size[a] - origin[a]) / dir[a];
      t_delta[a] = -grid.cell_size[a] / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = inf;
      t_delta[a] = inf;
    }
  }
  for (;;) {
    const CellId id = grid.cell_id(cell[0], cell[1], cell[2]);
    if (occupied[static_cast<std::size_t>(id)]) return id;
    std::size_t a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    if (t_max[a] > t1) return -1;
    cell[a] += step[a];
    if (cell[a] < 0 || cell[a] >= res) return -1;
    t_max[a] += t_delta[a];
  }
}

std::vector<CellId> first_hit_voxels(const VoxelGrid& grid, const std::vector<std::uint8_t>& occupied,
                                     const splat::Camera& cam, const PixelMask* mask) {
  cam.validate();
  if (static_cast<std::int64_t>(occupied.size()) != grid.cell_count()) {
    throw ContractError("first_hit_voxels: occupancy does not match the grid");
  }
  if (mask != nullptr &&
      (mask->width != cam.width || mask->height != cam.height ||
       mask->data.size() != static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height))) {
    throw ContractError("first_hit_voxels: mask must match the image size");
  }
  const Vec3 origin = cam.center();
  std::vector<CellId> hits;
  auto cast = [&](double u, double v) {
    const CellId id = first_hit(grid, occupied, origin, cam.ray_dir(u, v));
    if (id >= 0) hits.push_back(id);
  };
  if (mask != nullptr) {
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        if (mask->data[static_cast<std::size_t>(y) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x)]) {
          cast(x + 0.5, y + 0.5);
        }
      }
    }
  } else {
    for (int y = 0; y < cam.height; y += 4) {
      for (int x = 0; x < cam.width; x += 4) {
        cast(0.5 * (x + std::min(x + 4, cam.width)), 0.5 * (y + std::min(y + 4, cam.height)));
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

}  // namespace splatedit::voxel
