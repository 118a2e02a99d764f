// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/compress/compressor.hpp"

#include <algorithm>
#include <cmath>

#include "splatedit/common/binio.hpp"
#include "splatedit/common/error.hpp"

namespace splatedit::compress {

namespace {

constexpr std::string_view kLatentMagic{"SPLTLATN", 8};
constexpr std::uint32_t kLatentVersion = 1;

std::vector<std::int64_t> prefix(const std::vector<std::int64_t>& counts) {
  std::vector<std::int64_t> out{0};
  for (auto c : counts) out.push_back(out.back() + c);
  return out;
}

/// Slot index within its voxel and voxel index of every output row.
void slot_layout(std::span<const std::int64_t> k_offsets, std::vector<std::int64_t>& slot,
                 std::vector<std::int64_t>& group, int max_slots) {
  for (std::size_t g = 0; g + 1 < k_offsets.size(); ++g) {
    for (std::int64_t r = k_offsets[g]; r < k_offsets[g + 1]; ++r) {
      slot.push_back((r - k_offsets[g]) % max_slots);
      group.push_back(static_cast<std::int64_t>(g));
    }
  }
}

}  // namespace

const char* to_string(DistillMode m) {
  switch (m) {
    case DistillMode::kFeatsQuery:
      return "feats-query";
    case DistillMode::kLatentQuery:
      return "latent-query";
    case DistillMode::kVoxelMean:
      return "voxel-mean";
  }
  return "?";
}

DistillMode distill_mode_from_string(const std::string& s) {
  if (s == "feats-query") return DistillMode::kFeatsQuery;
  if (s == "latent-query") return DistillMode::kLatentQuery;
  if (s == "voxel-mean") return DistillMode::kVoxelMean;
  throw ContractError("unknown distill mode '" + s + "'");
}

int CompressorConfig::input_attributes() const { return 11 + 3 * splat::sh_coeff_count(sh_degree); }
int CompressorConfig::output_attributes() const { return 11 + 3 * splat::sh_coeff_count(sh_degree); }

CompressorConfig CompressorConfig::full_preset() {
  CompressorConfig c;
  c.feature_dim = 512;
  c.sh_degree = 4;
  c.dim = 512;
  c.heads = 8;
  c.enc_layers = 6;
  c.dec_layers = 6;
  c.mlp_hidden = 2048;
  c.grid_resolution = 128;
  return c;
}

// ---------------------------------------------------------------------------
// VoxelLatents

std::vector<std::int64_t> VoxelLatents::offsets() const { return prefix(counts); }

std::vector<voxel::CellId> VoxelLatents::row_cells() const {
  std::vector<voxel::CellId> out;
  out.reserve(static_cast<std::size_t>(rows()));
  for (std::size_t g = 0; g < cells.size(); ++g) out.insert(out.end(), static_cast<std::size_t>(counts[g]), cells[g]);
  return out;
}

voxel::VoxelGrid VoxelLatents::grid() const {
  auto g = voxel::make_grid(bounds, resolution);
  g.cell_of = row_cells();
  g.cells = cells;
  std::int64_t row = 0;
  for (auto k : counts) {
    std::vector<std::int64_t> members(static_cast<std::size_t>(k));
    for (auto& m : members) m = row++;
    g.groups.push_back(std::move(members));
  }
  return g;
}

void VoxelLatents::validate() const {
  if (cells.size() != counts.size()) throw ContractError("latent cells and counts differ in length");
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i] <= cells[i - 1]) throw ContractError("latent cells not strictly ascending");
  }
  const auto cell_count = static_cast<voxel::CellId>(resolution) * resolution * resolution;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] < 0 || cells[i] >= cell_count) throw ContractError("latent cell id out of range");
    if (counts[i] < 1) throw ContractError("voxel with no latents");
    total += counts[i];
  }
  if (total != rows()) throw ContractError("latent rows do not match counts");
  for (float v : latents.storage()) {
    if (!std::isfinite(v)) throw ContractError("non-finite latent");
  }
}

void write_latents(io::BinaryWriter& w, const VoxelLatents& l) {
  l.validate();
  w.bytes(kLatentMagic.data(), kLatentMagic.size());
  w.put(kLatentVersion);
  w.put(static_cast<std::int32_t>(l.resolution));
  for (int a = 0; a < 3; ++a) w.put(l.bounds.min[static_cast<std::size_t>(a)]);
  for (int a = 0; a < 3; ++a) w.put(l.bounds.max[static_cast<std::size_t>(a)]);
  w.put(static_cast<std::int32_t>(l.dim()));
  w.put(VoxelLatents::kKRuleVersion);
  w.put(l.topk_fraction);
  w.put(static_cast<std::uint64_t>(l.cells.size()));
  const auto d = l.dim();
  const auto off = l.offsets();
  for (std::size_t g = 0; g < l.cells.size(); ++g) {
    w.put(l.cells[g]);
    w.put(static_cast<std::uint32_t>(l.counts[g]));
    w.array(std::span<const float>(l.latents.ptr() + off[g] * d, static_cast<std::size_t>(l.counts[g] * d)));
  }
}

void save_latents(const std::string& path, const VoxelLatents& l) {
  l.validate();
  io::BinaryWriter w(path);
  write_latents(w, l);
  w.close();
}

VoxelLatents read_latents(io::BinaryReader& r) {
  const auto& path = r.name();
  r.expect_magic(kLatentMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kLatentVersion) throw FormatError(path + ": unsupported latent version " + std::to_string(version));
  VoxelLatents l;
  l.resolution = r.get<std::int32_t>();
  if (l.resolution <= 0) throw FormatError(path + ": bad grid resolution");
  for (int a = 0; a < 3; ++a) l.bounds.min[static_cast<std::size_t>(a)] = r.get<double>();
  for (int a = 0; a < 3; ++a) l.bounds.max[static_cast<std::size_t>(a)] = r.get<double>();
  const auto d = r.get<std::int32_t>();
  if (d <= 0) throw FormatError(path + ": bad latent width");
  const auto rule = r.get<std::uint32_t>();
  if (rule != VoxelLatents::kKRuleVersion) throw FormatError(path + ": unknown K rule " + std::to_string(rule));
  l.topk_fraction = r.get<double>();
  const auto voxels = r.get<std::uint64_t>();
  if (voxels > r.size()) throw FormatError(path + ": voxel count exceeds file size");
  std::vector<float> data;
  for (std::uint64_t g = 0; g < voxels; ++g) {
    l.cells.push_back(r.get<std::int64_t>());
    const auto k = r.get<std::uint32_t>();
    l.counts.push_back(k);
    const auto block = r.array<float>(static_cast<std::size_t>(k) * static_cast<std::size_t>(d));
    data.insert(data.end(), block.begin(), block.end());
  }
  const auto rows = static_cast<std::int64_t>(data.size()) / d;
  l.latents = ad::TensorF(ad::Shape{rows, d}, std::move(data));
  try {
    l.validate();
  } catch (const ContractError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return l;
}

VoxelLatents load_latents(const std::string& path) {
  io::BinaryReader r(path);
  auto l = read_latents(r);
  if (!r.at_end()) throw FormatError(path + ": trailing bytes after latent records");
  return l;
}

// ---------------------------------------------------------------------------
// Compressor

Compressor::Compressor(const CompressorConfig& cfg, nn::ParamStore& store, Rng& rng) : cfg_(cfg) {
  const std::int64_t d = cfg.dim;
  const double gain = 1.0 / std::sqrt(2.0 * (cfg.enc_layers + cfg.dec_layers + 1));
  embed_ = nn::Linear::make(store, "comp.embed", cfg.feature_dim + cfg.input_attributes(), d, rng);
  for (int l = 0; l < cfg.enc_layers; ++l) {
    encoder_.push_back(
        nn::SelfAttentionBlock::make(store, "comp.enc" + std::to_string(l), d, cfg.mlp_hidden, cfg.heads, rng, gain));
  }
  cross_ = nn::CrossAttentionBlock::make(store, "comp.cross", d, cfg.mlp_hidden, cfg.heads, rng, gain);
  slots_ = &store.create("comp.slots", ad::Shape{cfg.max_slots, d}, nn::Init::normal(0.02), rng);
  for (int l = 0; l < cfg.dec_layers; ++l) {
    decoder_.push_back(
        nn::SelfAttentionBlock::make(store, "comp.dec" + std::to_string(l), d, cfg.mlp_hidden, cfg.heads, rng, gain));
  }
  out_norm_ = nn::LayerNorm::make(store, "comp.norm", d, rng);
  head_ = nn::Linear::make(store, "comp.head", d, cfg.output_attributes(), rng, true, 0.1);
}

voxel::VoxelGrid Compressor::make_grid() const { return voxel::make_grid(cfg_.bounds, cfg_.grid_resolution); }

ad::TensorF Compressor::attribute_matrix(const voxel::VoxelGrid& grid, const splat::SplatScene& scene) const {
  if (scene.sh_degree() != cfg_.sh_degree) {
    throw ContractError("compressor expects SH degree " + std::to_string(cfg_.sh_degree) + ", scene has " +
                        std::to_string(scene.sh_degree()));
  }
  if (grid.gaussian_count() != scene.size()) throw ContractError("grid and scene disagree in Gaussian count");
  const std::int64_t n = scene.size();
  const int a = cfg_.input_attributes();
  const int sh_len = 3 * scene.coeffs();
  ad::TensorF out(ad::Shape{n, a});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    float* row = out.ptr() + i * a;
    const Vec3 c = grid.cell_center(grid.cell_of[u]);
    for (std::size_t k = 0; k < 3; ++k) {
      row[k] = static_cast<float>((scene.positions[3 * u + k] - c[k]) / grid.cell_size[k]);
      row[3 + k] = scene.log_scales[3 * u + k];
    }
    double qn = 0;
    for (std::size_t k = 0; k < 4; ++k) qn += static_cast<double>(scene.rotations[4 * u + k]) * scene.rotations[4 * u + k];
    qn = std::sqrt(qn);
    for (std::size_t k = 0; k < 4; ++k) row[6 + k] = static_cast<float>(qn > 0 ? scene.rotations[4 * u + k] / qn : (k == 0));
    row[10] = scene.opacity(i);
    std::copy_n(scene.sh.begin() + static_cast<std::ptrdiff_t>(u) * sh_len, sh_len, row + 11);
  }
  return out;
}

ad::VarF Compressor::embed_tokens(ad::TapeF& tape, const ad::VarF& features, const ad::VarF& attributes) const {
  if (features.value().dim(0) != attributes.value().dim(0)) {
    throw ContractError("features and attributes differ in row count");
  }
  const std::vector<ad::VarF> parts{features, attributes};
  return embed_.forward(tape, ad::concat_cols<float>(parts));
}

ad::VarF Compressor::encode(ad::TapeF& tape, const ad::VarF& tokens, std::span<const std::int64_t> offsets,
                            ad::AttentionMode mode) const {
  auto x = tokens;
  for (const auto& b : encoder_) x = b.forward(tape, x, offsets, mode);
  return x;
}

ad::VarF Compressor::distill(ad::TapeF& tape, const ad::VarF& z, std::span<const std::int64_t> offsets,
                             std::span<const std::int64_t> query_rows, std::span<const std::int64_t> k_offsets,
                             ad::AttentionMode mode) const {
  if (offsets.size() != k_offsets.size()) throw ContractError("distill: group and K offsets differ in length");
  switch (cfg_.mode) {
    case DistillMode::kFeatsQuery: {
      if (static_cast<std::int64_t>(query_rows.size()) != k_offsets.back()) {
        throw ContractError("distill: query rows do not match K offsets");
      }
      return cross_.forward(tape, ad::gather_rows(z, query_rows), z, k_offsets, offsets, mode);
    }
    case DistillMode::kLatentQuery: {
      std::vector<std::int64_t> slot, group;
      slot_layout(k_offsets, slot, group, cfg_.max_slots);
      return cross_.forward(tape, ad::gather_rows(tape.param(*slots_), slot), z, k_offsets, offsets, mode);
    }
    case DistillMode::kVoxelMean: {
      std::vector<std::int64_t> slot, group;
      slot_layout(k_offsets, slot, group, cfg_.max_slots);
      const auto mean = ad::gather_rows(ad::segment_mean(z, offsets), group);
      const auto q = ad::add(mean, ad::gather_rows(tape.param(*slots_), slot));
      return ad::add(q, cross_.mlp.forward(tape, cross_.ln2.forward(tape, q)));
    }
  }
  throw ContractError("unknown distill mode");
}

ad::VarF Compressor::decode_latents(ad::TapeF& tape, const ad::VarF& z, std::span<const std::int64_t> k_offsets) const {
  auto x = z;
  for (const auto& b : decoder_) x = b.forward(tape, x, k_offsets);
  return out_norm_.forward(tape, x);
}

raster::SplatVars<float> Compressor::gs_decode(ad::TapeF& tape, const ad::VarF& latents,
                                               const std::vector<voxel::CellId>& row_cells,
                                               const voxel::VoxelGrid& grid) const {
  const std::int64_t m = latents.value().dim(0);
  if (static_cast<std::int64_t>(row_cells.size()) != m) throw ContractError("gs_decode: one cell per latent row");
  ad::TensorF centers(ad::Shape{m, 3});
  for (std::int64_t i = 0; i < m; ++i) {
    const Vec3 c = grid.cell_center(row_cells[static_cast<std::size_t>(i)]);
    for (std::size_t k = 0; k < 3; ++k) centers[i * 3 + static_cast<std::int64_t>(k)] = static_cast<float>(c[k]);
  }
  ad::TensorF reach(ad::Shape{3});
  for (std::size_t k = 0; k < 3; ++k) reach[static_cast<std::int64_t>(k)] = static_cast<float>(cfg_.offset_cells * grid.cell_size[k]);
  const double mean_cell = (grid.cell_size[0] + grid.cell_size[1] + grid.cell_size[2]) / 3.0;
  const auto a = static_cast<std::int64_t>(cfg_.output_attributes());

  const auto raw = head_.forward(tape, latents);
  raster::SplatVars<float> out;
  out.sh_degree = cfg_.sh_degree;
  out.positions = ad::add(tape.leaf(std::move(centers), false),
                          ad::mul_row(ad::tanh(ad::slice_cols(raw, 0, 3)), tape.leaf(std::move(reach), false)));
  out.log_scales = ad::add_scalar(ad::slice_cols(raw, 3, 6), static_cast<float>(std::log(0.5 * mean_cell)));
  out.rotations =
      ad::add_row(ad::slice_cols(raw, 6, 10), tape.leaf(ad::TensorF(ad::Shape{4}, {1.f, 0.f, 0.f, 0.f}), false));
  out.opacity_logits = ad::slice_cols(raw, 10, 11);
  out.sh = ad::slice_cols(raw, 11, a);
  return out;
}

CompressorOutput Compressor::forward(ad::TapeF& tape, const voxel::VoxelGrid& grid, const ad::TensorF& features,
                                     const splat::SplatScene& scene) const {
  const std::int64_t n = scene.size();
  if (grid.gaussian_count() != n || features.dim(0) != n) {
    throw ContractError("compressor input misaligned: grid " + std::to_string(grid.gaussian_count()) + ", features " +
                        std::to_string(features.dim(0)) + ", Gaussians " + std::to_string(n));
  }
  if (features.dim(1) != cfg_.feature_dim) throw ContractError("feature width differs from configuration");
  if (n == 0) throw ContractError("compressor input is empty");

  CompressorOutput out;
  out.cells = grid.cells;
  std::vector<std::int64_t> lengths;
  for (const auto& g : grid.groups) {
    out.packed_order.insert(out.packed_order.end(), g.begin(), g.end());
    lengths.push_back(static_cast<std::int64_t>(g.size()));
  }
  const auto offsets = prefix(lengths);

  const auto attrs = attribute_matrix(grid, scene);
  const auto feats_packed = ad::gather_rows(tape.leaf(features, false), out.packed_order);
  const auto attrs_packed = ad::gather_rows(tape.leaf(attrs, false), out.packed_order);
  const auto z = encode(tape, embed_tokens(tape, feats_packed, attrs_packed), offsets);

  std::vector<float> opacities(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) opacities[static_cast<std::size_t>(i)] = scene.opacity(i);
  std::vector<std::int64_t> query_rows;
  for (std::size_t g = 0; g < grid.groups.size(); ++g) {
    const auto& members = grid.groups[g];
    const auto top = voxel::topk_indices(members, opacities, cfg_.topk_fraction);
    out.counts.push_back(static_cast<std::int64_t>(top.size()));
    for (auto idx : top) {
      const auto pos = std::lower_bound(members.begin(), members.end(), idx) - members.begin();
      query_rows.push_back(offsets[g] + pos);
      out.selected.push_back(idx);
    }
    out.row_cells.insert(out.row_cells.end(), top.size(), grid.cells[g]);
  }
  const auto k_offsets = prefix(out.counts);
  out.latents = decode_latents(tape, distill(tape, z, offsets, query_rows, k_offsets), k_offsets);
  out.splats = gs_decode(tape, out.latents, out.row_cells, grid);
  return out;
}

VoxelLatents Compressor::compress(const lrm::FeatureGaussians& fg) const {
  const auto features = fg.features();
  const auto grid = voxel::voxelize(fg.gaussians, features, cfg_.grid_resolution, cfg_.bounds);
  ad::TapeF tape;
  tape.set_grad_enabled(false);
  const auto res = forward(tape, grid, features, fg.gaussians);
  VoxelLatents out;
  out.resolution = cfg_.grid_resolution;
  out.bounds = grid.bounds;
  out.topk_fraction = cfg_.topk_fraction;
  out.cells = res.cells;
  out.counts = res.counts;
  out.latents = res.latents.value();
  return out;
}

splat::SplatScene Compressor::decode(const VoxelLatents& latents) const {
  ad::TapeF tape;
  tape.set_grad_enabled(false);
  const auto grid = latents.grid();
  return raster::to_scene(gs_decode(tape, tape.leaf(latents.latents, false), latents.row_cells(), grid));
}

CompressedAsset compress_asset(const splat::SplatScene& scene, const lrm::FeatureLrm& lrm, const Compressor& comp) {
  CompressedAsset out;
  out.source = lrm.reconstruct(lrm.render_inputs(scene)).pruned(lrm.config().prune_threshold);
  if (out.source.size() == 0) throw ContractError("reconstruction kept no Gaussians above the opacity threshold");
  out.latents = comp.compress(out.source);
  out.grid = voxel::voxelize(out.source.gaussians, comp.config().grid_resolution, comp.config().bounds);
  return out;
}

}  // namespace splatedit::compress
