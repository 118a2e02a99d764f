// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>

#include "splatedit/ad/attention.hpp"
#include "splatedit/ad/ops.hpp"
#include "splatedit/nn/params.hpp"

// Building blocks shared by the learned modules. Each holds pointers into a
// ParamStore and binds them to the tape on every forward call.
namespace splatedit::nn {

using VarF = ad::VarF;
using TapeF = ad::TapeF;

/// y = x W^T + b with W [out x in].
struct Linear {
  Param* w = nullptr;
  Param* b = nullptr;

  static Linear make(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
                     bool bias = true, double gain = 1.0);
  VarF forward(TapeF& tape, const VarF& x) const;
  std::int64_t in() const { return w->value.dim(1); }
  std::int64_t out() const { return w->value.dim(0); }
};

struct LayerNorm {
  Param* gain = nullptr;
  Param* bias = nullptr;
  float eps = 1e-5f;

  static LayerNorm make(ParamStore& store, const std::string& name, std::int64_t dim, Rng& rng);
  VarF forward(TapeF& tape, const VarF& x) const;
};

/// down (silu(gate x) * up x); no biases.
struct SwiGlu {
  Param* gate = nullptr;
  Param* up = nullptr;
  Param* down = nullptr;

  static SwiGlu make(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t hidden, Rng& rng,
                     double out_gain = 1.0);
  VarF forward(TapeF& tape, const VarF& x) const;
};

/// Pre-norm self-attention + SwiGLU block confined to row groups.
struct SelfAttentionBlock {
  LayerNorm ln1, ln2;
  Linear q, k, v, o;
  SwiGlu mlp;
  int heads = 4;

  static SelfAttentionBlock make(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t hidden,
                                 int heads, Rng& rng, double residual_gain = 1.0);
  VarF forward(TapeF& tape, const VarF& x, std::span<const std::int64_t> offsets,
               ad::AttentionMode mode = ad::AttentionMode::kSoftmax) const;
  /// The same block without the attention branch (x + MLP(LN x)); what the
  /// block computes on singleton groups up to the value/output maps.
  VarF mlp_only(TapeF& tape, const VarF& x) const;
};

/// Pre-norm cross-attention of `queries` into `context`, plus SwiGLU.
struct CrossAttentionBlock {
  LayerNorm ln_q, ln_kv, ln2;
  Linear q, k, v, o;
  SwiGlu mlp;
  int heads = 4;

  static CrossAttentionBlock make(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t hidden,
                                  int heads, Rng& rng, double residual_gain = 1.0);
  VarF forward(TapeF& tape, const VarF& queries, const VarF& context, std::span<const std::int64_t> q_offsets,
               std::span<const std::int64_t> kv_offsets, ad::AttentionMode mode = ad::AttentionMode::kSoftmax) const;
};

}  // namespace splatedit::nn
