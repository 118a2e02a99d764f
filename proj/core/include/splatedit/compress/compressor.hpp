// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatedit/common/binio.hpp"
#include "splatedit/lrm/feature_lrm.hpp"
#include "splatedit/nn/layers.hpp"
#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/voxel/grid.hpp"

// Local voxel transformer: per-voxel encoder over Gaussian tokens, top-K
// distillation to K latents per voxel, a decoder over those latents, and a
// linear head decoding each latent back to one Gaussian.
namespace splatedit::compress {

enum class DistillMode {
  kFeatsQuery,   ///< queries are the encoder latents of the top-K Gaussians
  kLatentQuery,  ///< queries are learned slot vectors shared by every voxel
  kVoxelMean,    ///< no attention: voxel mean plus a slot code
};

const char* to_string(DistillMode m);
DistillMode distill_mode_from_string(const std::string& s);

struct CompressorConfig {
  int feature_dim = 64;  // LRM token width
  int sh_degree = 1;     // of both input and decoded Gaussians
  int dim = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int mlp_hidden = 128;
  int grid_resolution = 32;
  splat::Aabb bounds{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
  double topk_fraction = 0.25;
  /// Decoded positions stay within this many cells of their voxel centre.
  double offset_cells = 1.5;
  DistillMode mode = DistillMode::kFeatsQuery;
  /// Distinct learned slot codes for the latent-query and mean variants;
  /// slot j uses code j mod max_slots.
  int max_slots = 16;

  int input_attributes() const;  // relative position, log-scale, quat, opacity, SH
  int output_attributes() const;
  /// Full-size configuration: D=512, 8 heads, six encoder and decoder blocks.
  static CompressorConfig full_preset();
};

/// K latents for every occupied voxel, ordered by cell id then slot.
struct VoxelLatents {
  static constexpr std::uint32_t kKRuleVersion = 1;  // K = max(floor(f N), 1)

  int resolution = 32;
  splat::Aabb bounds;
  double topk_fraction = 0.25;
  std::vector<voxel::CellId> cells;   // ascending
  std::vector<std::int64_t> counts;   // K per voxel
  ad::TensorF latents;                // [sum K x D]

  std::int64_t rows() const { return latents.rank() == 2 ? latents.dim(0) : 0; }
  std::int64_t dim() const { return latents.rank() == 2 ? latents.dim(1) : 0; }
  /// Row bounds [0, K0, K0+K1, ...].
  std::vector<std::int64_t> offsets() const;
  /// Cell id of every latent row.
  std::vector<voxel::CellId> row_cells() const;
  /// The grid geometry with one "Gaussian" per latent row.
  voxel::VoxelGrid grid() const;
  /// ContractError on unsorted cells, count mismatch or non-finite values.
  void validate() const;
};

void save_latents(const std::string& path, const VoxelLatents& latents);
VoxelLatents load_latents(const std::string& path);
/// The same record inside a larger file.
void write_latents(io::BinaryWriter& w, const VoxelLatents& latents);
VoxelLatents read_latents(io::BinaryReader& r);

/// Tape-side result of a full forward pass.
struct CompressorOutput {
  ad::VarF latents;                          // [M x D]
  raster::SplatVars<float> splats;           // one Gaussian per latent row
  std::vector<voxel::CellId> cells;          // occupied cells, ascending
  std::vector<std::int64_t> counts;          // K per voxel
  std::vector<voxel::CellId> row_cells;      // per latent row
  std::vector<std::int64_t> packed_order;    // Gaussian index of each packed token row
  std::vector<std::int64_t> selected;        // Gaussian index of each query (feats-query)
};

class Compressor {
 public:
  /// Registers parameters under "comp." in `store`.
  Compressor(const CompressorConfig& cfg, nn::ParamStore& store, Rng& rng);

  const CompressorConfig& config() const { return cfg_; }
  voxel::VoxelGrid make_grid() const;

  /// [N x A] attribute rows: position relative to the cell centre in cell
  /// units, log-scales, unit quaternion, opacity, SH.
  ad::TensorF attribute_matrix(const voxel::VoxelGrid& grid, const splat::SplatScene& scene) const;
  /// Linear([features ; attributes]); row counts must agree.
  ad::VarF embed_tokens(ad::TapeF& tape, const ad::VarF& features, const ad::VarF& attributes) const;
  ad::VarF encode(ad::TapeF& tape, const ad::VarF& tokens, std::span<const std::int64_t> offsets,
                  ad::AttentionMode mode = ad::AttentionMode::kSoftmax) const;
  /// Queries per voxel: `query_rows` index rows of `z` for feats-query and
  /// are ignored otherwise. `k_offsets` bound each voxel's K outputs.
  ad::VarF distill(ad::TapeF& tape, const ad::VarF& z, std::span<const std::int64_t> offsets,
                   std::span<const std::int64_t> query_rows, std::span<const std::int64_t> k_offsets,
                   ad::AttentionMode mode = ad::AttentionMode::kSoftmax) const;
  ad::VarF decode_latents(ad::TapeF& tape, const ad::VarF& z, std::span<const std::int64_t> k_offsets) const;
  raster::SplatVars<float> gs_decode(ad::TapeF& tape, const ad::VarF& latents,
                                     const std::vector<voxel::CellId>& row_cells, const voxel::VoxelGrid& grid) const;

  /// Full pass over a voxelized feature scene. ContractError when the grid,
  /// features and Gaussians disagree in count.
  CompressorOutput forward(ad::TapeF& tape, const voxel::VoxelGrid& grid, const ad::TensorF& features,
                           const splat::SplatScene& scene) const;

  /// Inference: voxelize on the configured grid and run forward without gradients.
  VoxelLatents compress(const lrm::FeatureGaussians& fg) const;
  splat::SplatScene decode(const VoxelLatents& latents) const;

  const nn::Linear& embed() const { return embed_; }
  const nn::CrossAttentionBlock& cross() const { return cross_; }
  const nn::Param* slot_codes() const { return slots_; }
  const nn::Linear& head() const { return head_; }

 private:
  CompressorConfig cfg_;
  nn::Linear embed_;
  std::vector<nn::SelfAttentionBlock> encoder_;
  nn::CrossAttentionBlock cross_;
  nn::Param* slots_ = nullptr;
  std::vector<nn::SelfAttentionBlock> decoder_;
  nn::LayerNorm out_norm_;
  nn::Linear head_;
};

/// Stage I end to end: render the input rig, reconstruct with the LRM,
/// prune, voxelize and compress.
struct CompressedAsset {
  VoxelLatents latents;
  voxel::VoxelGrid grid;  // of the pruned LRM Gaussians
  lrm::FeatureGaussians source;
};
CompressedAsset compress_asset(const splat::SplatScene& scene, const lrm::FeatureLrm& lrm, const Compressor& comp);

}  // namespace splatedit::compress
