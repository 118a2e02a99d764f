// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatedit/nn/layers.hpp"
#include "splatedit/ttt/muon.hpp"

// Refinement network. Each layer adapts its fast weights on the edit-view
// tokens, then updates the image tokens and the voxel latents with the same
// fast net through separate query heads.
namespace splatedit::ttt {

enum class LayerKind {
  kTtt,
  /// Ablation: latents cross-attend to the image tokens; no fast weights.
  kCrossAttention,
};

const char* to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct TttConfig {
  int dim = 64;           // width of image tokens and latents
  int fast_hidden = 128;  // hidden width of f_W
  int mlp_hidden = 128;
  int layers = 2;
  int heads = 4;  // cross-attention ablation only
  LayerKind kind = LayerKind::kTtt;
  MuonConfig muon;
};

/// Concrete fast weights, as held by a session between edits.
struct FastWeights {
  ad::TensorF gate, up, down;
};

FastVars<float> bind(ad::TapeF& tape, const FastWeights& w);
FastWeights values(const FastVars<float>& w);

/// Slow weights of one TTT layer plus its learned initial fast weights W0.
struct TttBlock {
  nn::LayerNorm ln, ln2;
  nn::Linear wk, wv, wq, wqv;
  nn::Linear out;
  nn::SwiGlu mlp;
  nn::Param* gate0 = nullptr;
  nn::Param* up0 = nullptr;
  nn::Param* down0 = nullptr;

  static TttBlock make(nn::ParamStore& store, const std::string& name, const TttConfig& cfg, Rng& rng);

  /// W0 bound to the tape as trainable parameters.
  FastVars<float> initial(ad::TapeF& tape) const;
  FastWeights initial_values() const;

  /// k = W_k LN(x), v = W_v LN(x) over all rows of `tokens`, then the Muon
  /// inner loop from `fast`.
  AdaptResult<float> adapt(ad::TapeF& tape, const FastVars<float>& fast, const ad::VarF& tokens,
                           const MuonConfig& muon) const;
  /// x + out(f_W(W_q LN x)), then x + MLP(LN2 x). `voxel` selects W_qv.
  ad::VarF apply(ad::TapeF& tape, const FastVars<float>& fast, const ad::VarF& x, bool voxel) const;
};

/// One cross-attention layer of the ablation.
struct CrossLayer {
  nn::CrossAttentionBlock voxel;
  nn::LayerNorm image_ln;
  nn::SwiGlu image_mlp;

  static CrossLayer make(nn::ParamStore& store, const std::string& name, const TttConfig& cfg, Rng& rng);
};

struct StreamState {
  ad::VarF tokens;   // [Ne x D] image tokens
  ad::VarF latents;  // [M x D]
  /// Per layer fast weights; empty for the cross-attention ablation.
  std::vector<FastVars<float>> fast;
  /// Per layer adaptation loss traces.
  std::vector<std::vector<double>> adapt_losses;
};

class Refiner {
 public:
  /// Registers parameters under "ttt." in `store`.
  Refiner(const TttConfig& cfg, nn::ParamStore& store, Rng& rng);

  const TttConfig& config() const { return cfg_; }

  /// Learned initial fast weights of every layer (empty for the ablation).
  std::vector<FastVars<float>> initial(ad::TapeF& tape) const;
  std::vector<FastWeights> initial_values() const;
  FastVars<float> merge_initial(ad::TapeF& tape) const;
  FastWeights merge_initial_values() const;

  /// All layers in order. The voxel stream updates only `rows` of the
  /// latents when given, leaving the others untouched. ContractError on an
  /// empty token set or a width mismatch.
  StreamState forward(ad::TapeF& tape, const ad::VarF& tokens, const ad::VarF& latents,
                      const std::vector<FastVars<float>>& fast, const std::vector<std::int64_t>* rows = nullptr) const;

  struct MergeResult {
    ad::VarF latents;
    FastVars<float> fast;
  };
  /// The extra layer used when merging a local edit: adapt on `tokens`
  /// from `fast`, then the voxel stream on `latents`.
  MergeResult merge(ad::TapeF& tape, const ad::VarF& tokens, const ad::VarF& latents,
                    const FastVars<float>& fast) const;

  const std::vector<TttBlock>& blocks() const { return blocks_; }

 private:
  TttConfig cfg_;
  std::vector<TttBlock> blocks_;
  std::vector<CrossLayer> cross_;
  TttBlock merge_block_;
  nn::CrossAttentionBlock merge_cross_;
};

}  // namespace splatedit::ttt
