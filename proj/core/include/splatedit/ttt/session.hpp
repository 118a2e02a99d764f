// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "splatedit/compress/compressor.hpp"
#include "splatedit/lrm/feature_lrm.hpp"
#include "splatedit/ttt/refiner.hpp"
#include "splatedit/voxel/grid.hpp"

// Edit sessions: Stage I latents plus the per-layer fast weights that
// accumulate across edits.
namespace splatedit::ttt {

enum class EditMode { kGlobal, kLocal };

const char* to_string(EditMode m);
EditMode edit_mode_from_string(const std::string& s);

struct EditView {
  lrm::View view;
  /// Restricts the rays cast for local edits.
  std::optional<voxel::PixelMask> mask;
};

struct HistoryEntry {
  EditMode mode = EditMode::kGlobal;
  std::vector<splat::Camera> cameras;
  std::vector<voxel::CellId> hits;  // local edits only
};

struct EditSession {
  compress::VoxelLatents base;  // never modified
  compress::VoxelLatents current;
  /// Decoded scene and the cell each Gaussian belongs to.
  splat::SplatScene scene;
  std::vector<voxel::CellId> scene_cells;
  std::vector<FastWeights> fast;
  FastWeights merge_fast;
  std::vector<HistoryEntry> history;
};

struct RefineReport {
  bool applied = false;
  std::string warning;
  std::int64_t hit_voxels = 0;  // every latent voxel for global edits
  std::int64_t gaussians = 0;
  std::vector<std::vector<double>> adapt_losses;
};

/// Fingerprint of a latent set, tying snapshots to their base.
std::uint64_t latent_hash(const compress::VoxelLatents& l);

class Editor {
 public:
  Editor(const lrm::FeatureLrm& lrm, const compress::Compressor& comp, const Refiner& refiner)
      : lrm_(lrm), comp_(comp), refiner_(refiner) {}

  EditSession start(compress::VoxelLatents base) const;
  /// Frozen LRM encoder tokens of the edit views.
  ad::TensorF edit_tokens(const std::vector<EditView>& edits) const;
  /// Union of first-hit voxels over the edit views, against the cells that
  /// currently hold a Gaussian with opacity above 0.01.
  std::vector<voxel::CellId> hit_voxels(const EditSession& s, const std::vector<EditView>& edits) const;

  /// Applies one edit in place. A local edit that hits nothing is a no-op
  /// with a warning. ContractError on an empty edit list.
  RefineReport refine(EditSession& s, const std::vector<EditView>& edits, EditMode mode) const;

  /// Local merge for `hits`: Gaussians outside the hit cells are copied,
  /// each hit cell's Gaussians are replaced by its originals passed through
  /// the merge layer followed by the refined latents, doubling the region.
  /// Updates latents, scene and merge fast weights of `s`.
  void merge_local(EditSession& s, const ad::TensorF& tokens, const std::vector<voxel::CellId>& hits,
                   const std::vector<std::int64_t>& rows, const ad::TensorF& refined) const;

  /// Fast weights back to W0, latents back to the base, history cleared.
  void reset(EditSession& s) const;

  splat::SplatScene decode_rows(const ad::TensorF& latents, const std::vector<voxel::CellId>& row_cells,
                                const compress::VoxelLatents& geometry) const;

  const lrm::FeatureLrm& lrm() const { return lrm_; }
  const compress::Compressor& compressor() const { return comp_; }
  const Refiner& refiner() const { return refiner_; }

 private:
  const lrm::FeatureLrm& lrm_;
  const compress::Compressor& comp_;
  const Refiner& refiner_;
};

/// "SPLTSESS", u32 version, u64 base hash, history JSON, current latents,
/// fast weights and the decoded scene. Round trips exactly.
void save_snapshot(const std::string& path, const EditSession& s);
/// FormatError when the file's base hash differs from `base`.
EditSession load_snapshot(const std::string& path, const compress::VoxelLatents& base);

}  // namespace splatedit::ttt
