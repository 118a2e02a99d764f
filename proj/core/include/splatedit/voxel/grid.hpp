// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatedit/ad/tensor.hpp"
#include "splatedit/common/vec.hpp"
#include "splatedit/splat/camera.hpp"
#include "splatedit/splat/scene.hpp"

namespace splatedit::voxel {

using CellId = std::int64_t;

/// Uniform grid over an axis-aligned box partitioning Gaussians by centre.
///
/// Occupied cells are listed in ascending id order; `groups[g]` holds the
/// Gaussians of `cells[g]` in ascending index order.
struct VoxelGrid {
  int resolution = 128;
  splat::Aabb bounds;
  Vec3 cell_size{1.0, 1.0, 1.0};
  /// True when a zero-extent axis of the requested bounds was widened.
  bool bounds_expanded = false;

  std::vector<CellId> cell_of;  // per Gaussian
  std::vector<CellId> cells;
  std::vector<std::vector<std::int64_t>> groups;

  std::int64_t gaussian_count() const { return static_cast<std::int64_t>(cell_of.size()); }
  std::int64_t group_count() const { return static_cast<std::int64_t>(cells.size()); }
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(resolution) * resolution * resolution;
  }

  CellId cell_id(int x, int y, int z) const {
    return x + static_cast<CellId>(resolution) * (y + static_cast<CellId>(resolution) * z);
  }
  std::array<int, 3> coords(CellId id) const;
  /// Cell containing p under clamp(floor((p - min) / cell_size), 0, res - 1).
  CellId cell_at(const Vec3& p) const;
  Vec3 cell_center(CellId id) const;
  splat::Aabb cell_box(CellId id) const;
  /// Position of `id` in `cells`, or -1 if the cell is empty.
  std::int64_t group_index(CellId id) const;
};

/// Grid geometry without any Gaussians (bounds widened like voxelize does).
VoxelGrid make_grid(const splat::Aabb& bounds, int resolution);

/// Partitions the scene's Gaussians. `bounds` defaults to the scene AABB.
/// A zero-extent axis is widened by 1e-3 on each side with a warning.
VoxelGrid voxelize(const splat::SplatScene& scene, int resolution,
                   const std::optional<splat::Aabb>& bounds = std::nullopt);
VoxelGrid voxelize(const std::vector<Vec3>& positions, int resolution,
                   const std::optional<splat::Aabb>& bounds = std::nullopt);
/// As above, checking that `features` has one row per Gaussian.
VoxelGrid voxelize(const splat::SplatScene& scene, const ad::TensorF& features, int resolution,
                   const std::optional<splat::Aabb>& bounds = std::nullopt);

/// K = max(floor(fraction * n), 1).
std::int64_t topk_count(std::int64_t n, double fraction = 0.25);

/// The K members of `group` with highest opacity, sorted by (-opacity, index).
/// `opacities` is indexed by Gaussian index.
std::vector<std::int64_t> topk_indices(const std::vector<std::int64_t>& group, const std::vector<float>& opacities,
                                       double fraction = 0.25);

/// Variable-length sequences stored back to back.
struct PackedSequences {
  std::int64_t dim = 0;
  std::vector<float> tokens;         // total x dim
  std::vector<std::int64_t> offsets;  // start row of each group
  std::vector<std::int64_t> lengths;

  std::int64_t total() const { return dim == 0 ? 0 : static_cast<std::int64_t>(tokens.size()) / dim; }
  /// Offsets with the end appended, the form packed attention takes.
  std::vector<std::int64_t> bounds() const;
  /// Throws ContractError unless offsets are the prefix sums of lengths.
  void validate() const;
};

/// Gathers rows of `tokens` [N x D] group by group.
PackedSequences pack(const std::vector<std::vector<std::int64_t>>& groups, const ad::TensorF& tokens);
/// Scatters packed rows back to an [N x D] tensor; every row in [0, N) must
/// be covered exactly once.
ad::TensorF unpack(const PackedSequences& packed, const std::vector<std::vector<std::int64_t>>& groups,
                   std::int64_t n);

/// Dense per-cell flags: a cell is occupied when one of its Gaussians has
/// opacity above `threshold`.
std::vector<std::uint8_t> occupancy(const VoxelGrid& grid, const std::vector<float>& opacities,
                                    double threshold = 0.01);

/// First occupied cell along origin + t * dir for t >= 0, or -1.
CellId first_hit(const VoxelGrid& grid, const std::vector<std::uint8_t>& occupied, const Vec3& origin,
                 const Vec3& dir);

/// Selected pixels of an image; non-zero entries are selected.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

/// Union of first-hit cells over the camera's rays, ascending. Without a mask
/// one ray is cast per 4x4 pixel block, through the block centre.
std::vector<CellId> first_hit_voxels(const VoxelGrid& grid, const std::vector<std::uint8_t>& occupied,
                                     const splat::Camera& cam, const PixelMask* mask = nullptr);

}  // namespace splatedit::voxel
