// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unistd.h>

#include "splatedit/common/error.hpp"
#include "splatedit/compress/compressor.hpp"
#include "splatedit/splat/synth.hpp"

namespace splatedit::compress {
namespace {

CompressorConfig small_config(DistillMode mode = DistillMode::kFeatsQuery) {
  CompressorConfig c;
  c.feature_dim = 8;
  c.dim = 16;
  c.heads = 2;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.mlp_hidden = 32;
  c.grid_resolution = 8;
  c.mode = mode;
  return c;
}

struct Input {
  splat::SplatScene scene;
  ad::TensorF features;
};

/// Random Gaussians clustered so that voxels hold several each; opacities distinct.
Input random_input(std::int64_t n, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  Input in;
  in.scene = splat::SplatScene(1);
  for (std::int64_t i = 0; i < n; ++i) {
    splat::Gaussian g;
    for (auto& p : g.position) p = static_cast<float>(rng.uniform(-spread, spread));
    for (auto& s : g.log_scale) s = static_cast<float>(rng.uniform(-4, -2));
    for (auto& q : g.rotation) q = static_cast<float>(rng.normal());
    g.opacity_logit = static_cast<float>(rng.uniform(-3, 3));
    g.sh.resize(12);
    for (auto& c : g.sh) c = static_cast<float>(rng.normal(0, 0.5));
    in.scene.push_back(g);
  }
  in.features = ad::TensorF(ad::Shape{n, 8});
  for (auto& v : in.features.storage()) v = static_cast<float>(rng.normal());
  return in;
}

struct Fixture {
  nn::ParamStore store;
  Rng rng{7};
  Compressor comp;
  explicit Fixture(CompressorConfig cfg = small_config()) : comp(cfg, store, rng) {}
};

ad::TensorF random_tokens(std::int64_t n, std::int64_t d, Rng& rng) {
  ad::TensorF t(ad::Shape{n, d});
  for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
  return t;
}

ad::TensorF rows_of(const ad::TensorF& t, std::int64_t begin, std::int64_t end) {
  const auto d = t.dim(1);
  return ad::TensorF(ad::Shape{end - begin, d},
                     std::vector<float>(t.ptr() + begin * d, t.ptr() + end * d));
}

double max_abs_diff(const ad::TensorF& a, const ad::TensorF& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

TEST(Embed, ZeroInputsAndBiasGiveZeroTokens) {
  Fixture f;
  auto* b = f.comp.embed().b;
  std::fill(b->value.storage().begin(), b->value.storage().end(), 0.f);
  ad::TapeF tape;
  const auto feats = tape.leaf(ad::TensorF(ad::Shape{5, 8}), false);
  const auto attrs = tape.leaf(ad::TensorF(ad::Shape{5, f.comp.config().input_attributes()}), false);
  const auto tok = f.comp.embed_tokens(tape, feats, attrs).value();
  EXPECT_EQ(tok.dim(0), 5);
  for (float v : tok.storage()) EXPECT_EQ(v, 0.f);
}

TEST(Embed, MisalignedInputIsContractError) {
  Fixture f;
  auto in = random_input(20, 1);
  const auto grid = voxel::voxelize(in.scene, 8, f.comp.config().bounds);
  ad::TapeF tape;
  const auto short_feats = rows_of(in.features, 0, 19);
  EXPECT_THROW(f.comp.forward(tape, grid, short_feats, in.scene), ContractError);
  EXPECT_THROW(f.comp.embed_tokens(tape, tape.leaf(short_feats, false),
                                   tape.leaf(ad::TensorF(ad::Shape{20, f.comp.config().input_attributes()}), false)),
               ContractError);
}

TEST(Embed, PackingFollowsGridGroups) {
  Fixture f;
  auto in = random_input(200, 2);
  const auto grid = voxel::voxelize(in.scene, 8, f.comp.config().bounds);
  ad::TapeF tape;
  const auto out = f.comp.forward(tape, grid, in.features, in.scene);
  ASSERT_EQ(static_cast<std::int64_t>(out.packed_order.size()), in.scene.size());
  const auto packed = voxel::pack(grid.groups, in.features);
  packed.validate();
  std::int64_t row = 0;
  for (std::size_t g = 0; g < grid.groups.size(); ++g) {
    EXPECT_EQ(packed.offsets[g], row);
    for (auto idx : grid.groups[g]) EXPECT_EQ(out.packed_order[static_cast<std::size_t>(row++)], idx);
  }
}

TEST(Encode, SingletonGroupsAreMlpOnly) {
  Fixture f;
  ad::TapeF tape;
  const auto x = tape.leaf(random_tokens(4, 16, f.rng), false);
  const std::vector<std::int64_t> off{0, 1, 2, 3, 4};
  const auto y = f.comp.encode(tape, x, off).value();
  // Reference through the identity mode: a singleton softmax is exactly 1.
  const auto ref = f.comp.encode(tape, x, off, ad::AttentionMode::kIdentity).value();
  EXPECT_LT(max_abs_diff(y, ref), 1e-6);
}

TEST(Encode, PackedEqualsPerGroupLoop) {
  Fixture f;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int64_t> lengths;
    const int groups = 1 + static_cast<int>(rng.below(8));
    for (int g = 0; g < groups; ++g) lengths.push_back(1 + static_cast<std::int64_t>(rng.below(9)));
    const auto off = ad::offsets_from_lengths(lengths);
    const auto x = random_tokens(off.back(), 16, rng);
    ad::TapeF tape;
    const auto packed = f.comp.encode(tape, tape.leaf(x, false), off).value();
    for (int g = 0; g < groups; ++g) {
      const auto sub = rows_of(x, off[g], off[g + 1]);
      const std::vector<std::int64_t> one{0, lengths[static_cast<std::size_t>(g)]};
      const auto y = f.comp.encode(tape, tape.leaf(sub, false), one).value();
      EXPECT_LT(max_abs_diff(y, rows_of(packed, off[g], off[g + 1])), 1e-5);
    }
  }
}

TEST(Encode, PermutationEquivariantWithinGroup) {
  Fixture f;
  Rng rng(4);
  const auto x = random_tokens(7, 16, rng);
  std::vector<std::int64_t> perm{3, 0, 6, 1, 5, 2, 4};
  ad::TensorF xp(x.shape());
  for (std::int64_t i = 0; i < 7; ++i) std::copy_n(x.ptr() + perm[i] * 16, 16, xp.ptr() + i * 16);
  const std::vector<std::int64_t> off{0, 7};
  ad::TapeF tape;
  const auto y = f.comp.encode(tape, tape.leaf(x, false), off).value();
  const auto yp = f.comp.encode(tape, tape.leaf(xp, false), off).value();
  for (std::int64_t i = 0; i < 7; ++i) {
    for (int d = 0; d < 16; ++d) EXPECT_NEAR(yp[i * 16 + d], y[perm[i] * 16 + d], 1e-5);
  }
}

TEST(Distill, SingletonGroupIsResidualUpdateOfItself) {
  Fixture f;
  ad::TapeF tape;
  const auto z = tape.leaf(random_tokens(1, 16, f.rng), false);
  const std::vector<std::int64_t> off{0, 1}, q{0};
  const auto out = f.comp.distill(tape, z, off, q, off).value();
  const auto ref = f.comp.cross().forward(tape, z, z, off, off).value();
  EXPECT_EQ(out.storage(), ref.storage());
  EXPECT_GT(max_abs_diff(out, z.value()), 1e-4);
}

TEST(Distill, UniformAttentionClosedForm) {
  Fixture f;
  Rng rng(5);
  const std::vector<std::int64_t> lengths{5, 1, 8};
  const auto off = ad::offsets_from_lengths(lengths);
  const std::vector<std::int64_t> k_counts{1, 1, 2};
  const auto k_off = ad::offsets_from_lengths(k_counts);
  const std::vector<std::int64_t> q_rows{2, 5, 9, 6};
  const auto zt = random_tokens(off.back(), 16, rng);
  ad::TapeF tape;
  const auto z = tape.leaf(zt, false);
  const auto out = f.comp.distill(tape, z, off, q_rows, k_off, ad::AttentionMode::kUniform).value();

  // Uniform weights average the values; by linearity that is v applied to the
  // mean of the normalised keys, then the output map, then the MLP residual.
  const auto& c = f.comp.cross();
  const auto hk = c.ln_kv.forward(tape, z).value();
  const auto& wv = c.v.w->value;
  const auto& wo = c.o.w->value;
  const auto& bo = c.o.b->value;
  for (std::size_t g = 0; g < lengths.size(); ++g) {
    std::vector<double> mean(16, 0.0);
    for (std::int64_t r = off[g]; r < off[g + 1]; ++r) {
      for (int d = 0; d < 16; ++d) mean[static_cast<std::size_t>(d)] += hk[r * 16 + d] / static_cast<double>(lengths[g]);
    }
    std::vector<double> vm(16, 0.0), om(16, 0.0);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) vm[static_cast<std::size_t>(i)] += wv[i * 16 + j] * mean[static_cast<std::size_t>(j)];
    }
    for (int i = 0; i < 16; ++i) {
      om[static_cast<std::size_t>(i)] = bo[i];
      for (int j = 0; j < 16; ++j) om[static_cast<std::size_t>(i)] += wo[i * 16 + j] * vm[static_cast<std::size_t>(j)];
    }
    for (std::int64_t r = k_off[g]; r < k_off[g + 1]; ++r) {
      ad::TensorF x1(ad::Shape{1, 16});
      for (int d = 0; d < 16; ++d) x1[d] = static_cast<float>(zt[q_rows[static_cast<std::size_t>(r)] * 16 + d] + om[static_cast<std::size_t>(d)]);
      const auto xv = tape.leaf(x1, false);
      const auto ref = ad::add(xv, c.mlp.forward(tape, c.ln2.forward(tape, xv))).value();
      for (int d = 0; d < 16; ++d) EXPECT_NEAR(out[r * 16 + d], ref[d], 2e-5);
    }
  }
}

TEST(Distill, SelectionMatchesTopK) {
  Fixture f;
  auto in = random_input(300, 6);
  const auto grid = voxel::voxelize(in.scene, 8, f.comp.config().bounds);
  std::vector<float> op;
  for (std::int64_t i = 0; i < in.scene.size(); ++i) op.push_back(in.scene.opacity(i));
  ad::TapeF tape;
  const auto out = f.comp.forward(tape, grid, in.features, in.scene);
  std::vector<std::int64_t> expect;
  for (const auto& g : grid.groups) {
    const auto top = voxel::topk_indices(g, op);
    expect.insert(expect.end(), top.begin(), top.end());
  }
  EXPECT_EQ(out.selected, expect);
}

TEST(Distill, AllModesProduceKPerVoxel) {
  for (auto mode : {DistillMode::kFeatsQuery, DistillMode::kLatentQuery, DistillMode::kVoxelMean}) {
    Fixture f(small_config(mode));
    auto in = random_input(150, 8);
    const auto grid = voxel::voxelize(in.scene, 8, f.comp.config().bounds);
    ad::TapeF tape;
    const auto out = f.comp.forward(tape, grid, in.features, in.scene);
    std::int64_t expect = 0;
    for (const auto& g : grid.groups) expect += voxel::topk_count(static_cast<std::int64_t>(g.size()));
    EXPECT_EQ(out.latents.value().dim(0), expect) << to_string(mode);
    tape.backward(ad::mean(ad::square(out.splats.sh)));
    EXPECT_GT(f.store.at("comp.embed.w").grad.numel(), 0);
  }
  EXPECT_EQ(distill_mode_from_string("latent-query"), DistillMode::kLatentQuery);
  EXPECT_THROW(distill_mode_from_string("pool"), ContractError);
}

TEST(DecodeLatents, ShapeLoopAndDeterminism) {
  Fixture f;
  Rng rng(9);
  const std::vector<std::int64_t> k{1, 3, 2, 1};
  const auto off = ad::offsets_from_lengths(k);
  const auto z = random_tokens(off.back(), 16, rng);
  ad::TapeF tape;
  const auto y = f.comp.decode_latents(tape, tape.leaf(z, false), off).value();
  EXPECT_EQ(y.shape(), z.shape());
  EXPECT_EQ(f.comp.decode_latents(tape, tape.leaf(z, false), off).value().storage(), y.storage());
  for (std::size_t g = 0; g < k.size(); ++g) {
    const std::vector<std::int64_t> one{0, k[g]};
    const auto yg = f.comp.decode_latents(tape, tape.leaf(rows_of(z, off[g], off[g + 1]), false), one).value();
    EXPECT_LT(max_abs_diff(yg, rows_of(y, off[g], off[g + 1])), 1e-5);
  }
}

TEST(GsDecode, ZeroLatentSitsAtVoxelCentre) {
  Fixture f;
  auto* b = f.comp.head().b;
  std::fill(b->value.storage().begin(), b->value.storage().end(), 0.f);
  const auto grid = f.comp.make_grid();
  const std::vector<voxel::CellId> cells{grid.cell_id(1, 2, 3), grid.cell_id(7, 0, 5)};
  ad::TapeF tape;
  const auto s = raster::to_scene(f.comp.gs_decode(tape, tape.leaf(ad::TensorF(ad::Shape{2, 16}), false), cells, grid));
  for (std::int64_t i = 0; i < 2; ++i) {
    const auto c = grid.cell_center(cells[static_cast<std::size_t>(i)]);
    const auto p = s.position(i);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], c[k], 1e-6);
    EXPECT_FLOAT_EQ(s.opacity(i), 0.5f);
    const auto g = s.gaussian(i);
    EXPECT_EQ(g.rotation, (std::array<float, 4>{1.f, 0.f, 0.f, 0.f}));
  }
}

TEST(GsDecode, PositionsStayInDilatedVoxel) {
  Fixture f;
  Rng rng(10);
  const auto grid = f.comp.make_grid();
  std::vector<voxel::CellId> cells;
  for (int i = 0; i < 200; ++i) cells.push_back(static_cast<voxel::CellId>(rng.below(512)));
  ad::TapeF tape;
  const auto s = raster::to_scene(f.comp.gs_decode(tape, tape.leaf(random_tokens(200, 16, rng), false), cells, grid));
  // Scale the head up so tanh saturates for some rows.
  for (auto& w : f.comp.head().w->value.storage()) w *= 100.f;
  const auto s2 = raster::to_scene(f.comp.gs_decode(tape, tape.leaf(random_tokens(200, 16, rng), false), cells, grid));
  for (const auto* scene : {&s, &s2}) {
    for (std::int64_t i = 0; i < 200; ++i) {
      const auto box = grid.cell_box(cells[static_cast<std::size_t>(i)]);
      const auto p = scene->position(i);
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_GE(p[k], box.min[k] - 1.0 * grid.cell_size[k] - 1e-6);
        EXPECT_LE(p[k], box.max[k] + 1.0 * grid.cell_size[k] + 1e-6);
      }
    }
  }
}

TEST(Compress, CountLawOnRandomScenes) {
  Fixture f;
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_input(20 + static_cast<std::int64_t>(rng.below(200)), 100 + static_cast<std::uint64_t>(trial),
                           rng.uniform(0.1, 0.9));
    const auto grid = voxel::voxelize(in.scene, 8, f.comp.config().bounds);
    ad::TapeF tape;
    tape.set_grad_enabled(false);
    const auto out = f.comp.forward(tape, grid, in.features, in.scene);
    std::int64_t law = 0;
    for (const auto& g : grid.groups) law += std::max<std::int64_t>(static_cast<std::int64_t>(g.size()) / 4, 1);
    ASSERT_EQ(out.splats.positions.value().dim(0), law);
    EXPECT_LE(law, in.scene.size() / 4 + grid.group_count());
  }
}

TEST(Compress, DecodedMultisetInvariantToInputOrder) {
  Fixture f;
  auto in = random_input(120, 12, 0.3);
  std::vector<std::int64_t> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(13);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  Input shuffled;
  shuffled.scene = in.scene.subset(perm);
  shuffled.features = ad::TensorF(in.features.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy_n(in.features.ptr() + perm[i] * 8, 8, shuffled.features.ptr() + static_cast<std::int64_t>(i) * 8);
  }
  auto run = [&](const Input& x) {
    const auto grid = voxel::voxelize(x.scene, 8, f.comp.config().bounds);
    ad::TapeF tape;
    tape.set_grad_enabled(false);
    return raster::to_scene(f.comp.forward(tape, grid, x.features, x.scene).splats);
  };
  const auto a = run(in);
  const auto b = run(shuffled);
  ASSERT_EQ(a.size(), b.size());
  // Rows come out by cell then by descending opacity, which is order-free.
  for (std::size_t i = 0; i < a.positions.size(); ++i) EXPECT_NEAR(a.positions[i], b.positions[i], 1e-5);
  for (std::size_t i = 0; i < a.sh.size(); ++i) EXPECT_NEAR(a.sh[i], b.sh[i], 1e-5);
}

TEST(LatentFile, RoundTripIsExact) {
  Fixture f;
  lrm::FeatureGaussians fg;
  auto in = random_input(150, 14);
  fg.gaussians = in.scene;
  fg.tokens = in.features;
  for (std::int64_t i = 0; i < 150; ++i) {
    fg.token_of.push_back(i);
    fg.pixel_of.push_back(i);
  }
  const auto lat = f.comp.compress(fg);
  const auto path = std::filesystem::temp_directory_path() / ("lat_" + std::to_string(getpid()) + ".bin");
  save_latents(path.string(), lat);
  const auto back = load_latents(path.string());
  EXPECT_EQ(back.cells, lat.cells);
  EXPECT_EQ(back.counts, lat.counts);
  EXPECT_EQ(back.latents.storage(), lat.latents.storage());
  EXPECT_EQ(back.resolution, lat.resolution);
  EXPECT_EQ(back.bounds.min, lat.bounds.min);
  // Compressing again is bit-identical.
  EXPECT_EQ(f.comp.compress(fg).latents.storage(), lat.latents.storage());

  std::ifstream src(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
  src.close();
  {
    std::ofstream cut(path, std::ios::binary | std::ios::trunc);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  EXPECT_THROW(load_latents(path.string()), Error);
  bytes[0] = 'X';
  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  EXPECT_THROW(load_latents(path.string()), Error);
  std::filesystem::remove(path);
}

TEST(LatentFile, GridViewMatchesRows) {
  VoxelLatents l;
  l.resolution = 4;
  l.bounds = {{-1, -1, -1}, {1, 1, 1}};
  l.cells = {3, 10, 40};
  l.counts = {2, 1, 3};
  l.latents = ad::TensorF(ad::Shape{6, 2});
  l.validate();
  EXPECT_EQ(l.offsets(), (std::vector<std::int64_t>{0, 2, 3, 6}));
  EXPECT_EQ(l.row_cells(), (std::vector<voxel::CellId>{3, 3, 10, 40, 40, 40}));
  const auto g = l.grid();
  EXPECT_EQ(g.groups[2], (std::vector<std::int64_t>{3, 4, 5}));
  l.cells = {3, 3, 40};
  EXPECT_THROW(l.validate(), ContractError);
}

TEST(CompressAsset, DeterministicEndToEnd) {
  nn::ParamStore store;
  Rng rng(15);
  lrm::LrmConfig lc;
  lc.image_size = 16;
  lc.dim = 8;
  lc.layers = 1;
  lc.heads = 2;
  lc.mlp_hidden = 16;
  lrm::FeatureLrm model(lc, store, rng);
  Compressor comp(small_config(), store, rng);
  splat::SynthSpec spec;
  spec.primitives.push_back(splat::Primitive{});
  spec.spacing = 0.08;
  const auto scene = splat::synth_scene(spec, 3);
  const auto a = compress_asset(scene, model, comp);
  const auto b = compress_asset(scene, model, comp);
  EXPECT_EQ(a.latents.latents.storage(), b.latents.latents.storage());
  EXPECT_EQ(a.latents.cells, b.latents.cells);
  std::int64_t law = 0;
  for (const auto& g : a.grid.groups) law += voxel::topk_count(static_cast<std::int64_t>(g.size()));
  EXPECT_EQ(a.latents.rows(), law);
  EXPECT_EQ(comp.decode(a.latents).size(), law);
}

}  // namespace
}  // namespace splatedit::compress
