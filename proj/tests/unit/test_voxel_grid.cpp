// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "splatedit/common/error.hpp"
#include "splatedit/common/rng.hpp"
#include "splatedit/voxel/grid.hpp"
#include "voxel_oracle.hpp"

namespace splatedit::voxel {
namespace {

splat::Aabb cube(double lo, double hi) {
  splat::Aabb b;
  b.min = {lo, lo, lo};
  b.max = {hi, hi, hi};
  return b;
}

TEST(Voxelize, BoundsMinIsCellZero) {
  const auto grid = voxelize(std::vector<Vec3>{{-1, -1, -1}, {1, 1, 1}}, 16);
  EXPECT_EQ(grid.cell_of[0], 0);
  EXPECT_EQ(grid.cell_of[1], grid.cell_id(15, 15, 15));
}

TEST(Voxelize, BoundaryPointTakesFloorCell) {
  const auto grid = voxelize(std::vector<Vec3>{{3.0, 0.5, 7.0}}, 16, cube(0, 16));
  EXPECT_EQ(grid.coords(grid.cell_of[0]), (std::array<int, 3>{3, 0, 7}));
  EXPECT_EQ(grid.cell_of[0], 3 + 16 * (0 + 16 * 7));
}

TEST(Voxelize, OutsidePointsClamp) {
  const auto grid = voxelize(std::vector<Vec3>{{-5, 0.5, 99}}, 16, cube(0, 16));
  EXPECT_EQ(grid.coords(grid.cell_of[0]), (std::array<int, 3>{0, 0, 15}));
}

TEST(Voxelize, PartitionOfRandomCloud) {
  Rng rng(1);
  std::vector<Vec3> pts(1000);
  for (auto& p : pts) p = {rng.normal(), rng.normal(), rng.normal()};
  const auto grid = voxelize(pts, 16);
  std::vector<int> seen(1000, 0);
  std::size_t total = 0;
  for (std::size_t g = 0; g < grid.groups.size(); ++g) {
    total += grid.groups[g].size();
    EXPECT_TRUE(std::is_sorted(grid.groups[g].begin(), grid.groups[g].end()));
    for (auto i : grid.groups[g]) {
      ++seen[static_cast<std::size_t>(i)];
      EXPECT_EQ(grid.cell_of[static_cast<std::size_t>(i)], grid.cells[g]);
    }
  }
  EXPECT_EQ(total, 1000u);
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  EXPECT_TRUE(std::is_sorted(grid.cells.begin(), grid.cells.end()));
  EXPECT_EQ(std::set<CellId>(grid.cells.begin(), grid.cells.end()).size(), grid.cells.size());
}

TEST(Voxelize, DegenerateAxisIsWidened) {
  const auto grid = voxelize(std::vector<Vec3>{{0, 0, 0}, {1, 0, 1}}, 16);
  EXPECT_TRUE(grid.bounds_expanded);
  EXPECT_GT(grid.bounds.max[1], grid.bounds.min[1]);
  EXPECT_EQ(grid.group_count(), 2);
}

TEST(Voxelize, FeatureRowsMustMatch) {
  splat::SplatScene scene(0);
  splat::Gaussian g;
  g.sh = {0, 0, 0};
  scene.push_back(g);
  scene.push_back(g);
  EXPECT_THROW(voxelize(scene, ad::TensorF(ad::Shape{3, 4}), 16), ContractError);
  EXPECT_NO_THROW(voxelize(scene, ad::TensorF(ad::Shape{2, 4}), 16));
}

TEST(TopK, CountFormula) {
  EXPECT_EQ(topk_count(8), 2);
  for (int n = 1; n <= 5; ++n) EXPECT_EQ(topk_count(n), 1) << n;
  EXPECT_EQ(topk_count(12), 3);
  EXPECT_EQ(topk_count(7), 1);
  EXPECT_EQ(topk_count(400), 100);
}

TEST(TopK, TiesBreakByIndex) {
  EXPECT_EQ(topk_indices({0, 1, 2}, {0.5f, 0.9f, 0.5f}, 0.67), (std::vector<std::int64_t>{1, 0}));
  EXPECT_EQ(topk_indices({0, 1, 2, 3, 4, 5, 6, 7}, {0.5f, 0.9f, 0.5f, 0.1f, 0.9f, 0.2f, 0.3f, 0.3f}),
            (std::vector<std::int64_t>{1, 4}));
}

TEST(TopK, SelectionIgnoresGroupOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<float> op(static_cast<std::size_t>(n));
    for (auto& o : op) o = static_cast<float>(rng.uniform());
    std::vector<std::int64_t> group(static_cast<std::size_t>(n));
    std::iota(group.begin(), group.end(), 0);
    const auto ref = topk_indices(group, op);
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng.below(i)]);
    EXPECT_EQ(topk_indices(group, op), ref);
    EXPECT_EQ(static_cast<std::int64_t>(ref.size()), topk_count(n));
  }
}

TEST(Pack, SingleGroupIsIdentity) {
  ad::TensorF t = ad::TensorF::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const auto p = pack({{0, 1, 2}}, t);
  EXPECT_EQ(p.tokens, t.storage());
  EXPECT_EQ(p.offsets, (std::vector<std::int64_t>{0}));
}

TEST(Pack, OffsetsArePrefixSums) {
  ad::TensorF t(ad::Shape{6, 1});
  const auto p = pack({{0, 1, 2}, {3}, {4, 5}}, t);
  EXPECT_EQ(p.offsets, (std::vector<std::int64_t>{0, 3, 4}));
  EXPECT_EQ(p.total(), 6);
  EXPECT_EQ(p.bounds(), (std::vector<std::int64_t>{0, 3, 4, 6}));
}

TEST(Pack, RoundTripOnRandomGroupings) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + rng.below(60));
    ad::TensorF t(ad::Shape{n, 5});
    for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<std::vector<std::int64_t>> groups;
    for (std::size_t i = 0; i < perm.size();) {
      const auto len = std::min<std::size_t>(1 + rng.below(7), perm.size() - i);
      groups.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i), perm.begin() + static_cast<std::ptrdiff_t>(i + len));
      i += len;
    }
    const auto p = pack(groups, t);
    const auto back = unpack(p, groups, n);
    EXPECT_EQ(back.storage(), t.storage());
  }
}

TEST(Pack, InconsistentOffsetsAreContractErrors) {
  ad::TensorF t(ad::Shape{4, 2});
  auto p = pack({{0, 1}, {2, 3}}, t);
  p.offsets[1] = 1;
  EXPECT_THROW(unpack(p, {{0, 1}, {2, 3}}, 4), ContractError);
  auto q = pack({{0, 1}, {2, 3}}, t);
  EXPECT_THROW(unpack(q, {{0, 1}, {2, 2}}, 4), ContractError);
  EXPECT_THROW(unpack(q, {{0, 1, 2}, {3}}, 4), ContractError);
}

// ---- ray traversal --------------------------------------------------------

std::vector<std::uint8_t> random_occupancy(const VoxelGrid& g, Rng& rng, double p) {
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(g.cell_count()));
  for (auto& o : occ) o = rng.uniform() < p ? 1 : 0;
  return occ;
}

TEST(FirstHit, SingleCellOnAxis) {
  const auto grid = make_grid(cube(-1, 1), 4);
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(grid.cell_count()), 0);
  const auto target = grid.cell_id(1, 2, 1);
  occ[static_cast<std::size_t>(target)] = 1;
  const Vec3 c = grid.cell_center(target);
  const auto cam = splat::Camera::look_at(c + Vec3{0, 0, 3}, c, {0, 1, 0}, 45, 32, 32);
  EXPECT_EQ(first_hit_voxels(grid, occ, cam), (std::vector<CellId>{target}));
}

TEST(FirstHit, FrontCellShadowsBackCell) {
  const auto grid = make_grid(cube(-1, 1), 16);
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(grid.cell_count()), 0);
  const auto front = grid.cell_id(7, 7, 12), back = grid.cell_id(7, 7, 4);
  occ[static_cast<std::size_t>(front)] = occ[static_cast<std::size_t>(back)] = 1;
  const Vec3 c = grid.cell_center(front);
  EXPECT_EQ(first_hit(grid, occ, c + Vec3{0, 0, 3}, {0, 0, -1}), front);
  EXPECT_EQ(first_hit(grid, occ, c - Vec3{0, 0, 3}, {0, 0, 1}), back);
}

TEST(FirstHit, MissingTheBoxGivesNothing) {
  const auto grid = make_grid(cube(-1, 1), 16);
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(grid.cell_count()), 1);
  EXPECT_EQ(first_hit(grid, occ, {0, 5, 5}, {0, 0, -1}), -1);
  EXPECT_EQ(first_hit(grid, occ, {0, 0, 5}, {0, 0, 1}), -1);
}

TEST(FirstHit, MatchesBruteForceOracle) {
  Rng rng(12);
  for (int pattern = 0; pattern < 20; ++pattern) {
    splat::Aabb box;
    box.min = {rng.uniform(-1.5, -0.5), rng.uniform(-1.5, -0.5), rng.uniform(-1.5, -0.5)};
    box.max = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
    const auto grid = make_grid(box, 16);
    const auto occ = random_occupancy(grid, rng, rng.uniform(0.005, 0.05));
    int hits = 0;
    for (int ray = 0; ray < 1000; ++ray) {
      Vec3 o, d;
      if (ray % 4 == 0) {
        o = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};  // inside
        d = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
      } else {
        const Vec3 s = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
        o = s * 4.0;
        const Vec3 target{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
        d = normalized(target - o);
      }
      const auto want = testing::brute_force_first_hit(grid, occ, o, d);
      ASSERT_EQ(first_hit(grid, occ, o, d), want) << "pattern " << pattern << " ray " << ray;
      hits += want >= 0 ? 1 : 0;
    }
    EXPECT_GT(hits, 50);
  }
}

TEST(FirstHit, OccupancyUsesOpacityThreshold) {
  const auto grid = voxelize(std::vector<Vec3>{{0, 0, 0}, {0.5, 0.5, 0.5}, {1, 1, 1}}, 4);
  const auto occ = occupancy(grid, {0.5f, 0.005f, 0.02f});
  EXPECT_EQ(occ[static_cast<std::size_t>(grid.cell_of[0])], 1);
  EXPECT_EQ(occ[static_cast<std::size_t>(grid.cell_of[1])], 0);
  EXPECT_EQ(occ[static_cast<std::size_t>(grid.cell_of[2])], 1);
}

TEST(FirstHit, MaskSelectsExactPixels) {
  const auto grid = make_grid(cube(-1, 1), 8);
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(grid.cell_count()), 0);
  for (int x = 0; x < 8; ++x) occ[static_cast<std::size_t>(grid.cell_id(x, 4, 7))] = 1;
  const auto cam = splat::Camera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 40, 32, 32);
  PixelMask mask{32, 32, std::vector<std::uint8_t>(32 * 32, 0)};
  mask.data[15 * 32 + 16] = 1;  // just above the image centre: world y > 0
  const auto hit = first_hit_voxels(grid, occ, cam, &mask);
  ASSERT_EQ(hit.size(), 1u);
  const auto want = first_hit(grid, occ, cam.center(), cam.ray_dir(16.5, 15.5));
  EXPECT_EQ(hit[0], want);
  PixelMask bad{16, 16, std::vector<std::uint8_t>(256, 1)};
  EXPECT_THROW(first_hit_voxels(grid, occ, cam, &bad), ContractError);
}

}  // namespace
}  // namespace splatedit::voxel
