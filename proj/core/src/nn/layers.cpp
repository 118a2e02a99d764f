// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/nn/layers.hpp"

#include <cmath>

namespace splatedit::nn {

Linear Linear::make(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng, bool bias,
                    double gain) {
  Linear l;
  l.w = &store.create(name + ".w", ad::Shape{out, in}, Init::normal(gain / std::sqrt(static_cast<double>(in))), rng);
  if (bias) l.b = &store.create(name + ".b", ad::Shape{out}, Init::zeros(), rng);
  return l;
}

VarF Linear::forward(TapeF& tape, const VarF& x) const {
  auto y = ad::matmul_nt(x, tape.param(*w));
  if (b != nullptr) y = ad::add_row(y, tape.param(*b));
  return y;
}

LayerNorm LayerNorm::make(ParamStore& store, const std::string& name, std::int64_t dim, Rng& rng) {
  LayerNorm l;
  l.gain = &store.create(name + ".g", ad::Shape{dim}, Init::ones(), rng);
  l.bias = &store.create(name + ".b", ad::Shape{dim}, Init::zeros(), rng);
  return l;
}

VarF LayerNorm::forward(TapeF& tape, const VarF& x) const {
  return ad::layernorm(x, tape.param(*gain), tape.param(*bias), eps);
}

SwiGlu SwiGlu::make(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t hidden, Rng& rng,
                    double out_gain) {
  SwiGlu m;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(dim));
  m.gate = &store.create(name + ".gate", ad::Shape{hidden, dim}, Init::normal(s_in), rng);
  m.up = &store.create(name + ".up", ad::Shape{hidden, dim}, Init::normal(s_in), rng);
  m.down = &store.create(name + ".down", ad::Shape{dim, hidden},
                         Init::normal(out_gain / std::sqrt(static_cast<double>(hidden))), rng);
  return m;
}

VarF SwiGlu::forward(TapeF& tape, const VarF& x) const {
  return ad::swiglu_mlp(x, tape.param(*gate), tape.param(*up), tape.param(*down));
}

SelfAttentionBlock SelfAttentionBlock::make(ParamStore& store, const std::string& name, std::int64_t dim,
                                            std::int64_t hidden, int heads, Rng& rng, double residual_gain) {
  SelfAttentionBlock b;
  b.heads = heads;
  b.ln1 = LayerNorm::make(store, name + ".ln1", dim, rng);
  b.q = Linear::make(store, name + ".q", dim, dim, rng, false);
  b.k = Linear::make(store, name + ".k", dim, dim, rng, false);
  b.v = Linear::make(store, name + ".v", dim, dim, rng, false);
  b.o = Linear::make(store, name + ".o", dim, dim, rng, true, residual_gain);
  b.ln2 = LayerNorm::make(store, name + ".ln2", dim, rng);
  b.mlp = SwiGlu::make(store, name + ".mlp", dim, hidden, rng, residual_gain);
  return b;
}

VarF SelfAttentionBlock::forward(TapeF& tape, const VarF& x, std::span<const std::int64_t> offsets,
                                 ad::AttentionMode mode) const {
  const auto h = ln1.forward(tape, x);
  const auto att = ad::packed_attention(q.forward(tape, h), k.forward(tape, h), v.forward(tape, h), offsets, offsets,
                                        heads, mode);
  const auto x1 = ad::add(x, o.forward(tape, att));
  return ad::add(x1, mlp.forward(tape, ln2.forward(tape, x1)));
}

VarF SelfAttentionBlock::mlp_only(TapeF& tape, const VarF& x) const {
  return ad::add(x, mlp.forward(tape, ln2.forward(tape, x)));
}

CrossAttentionBlock CrossAttentionBlock::make(ParamStore& store, const std::string& name, std::int64_t dim,
                                              std::int64_t hidden, int heads, Rng& rng, double residual_gain) {
  CrossAttentionBlock b;
  b.heads = heads;
  b.ln_q = LayerNorm::make(store, name + ".ln_q", dim, rng);
  b.ln_kv = LayerNorm::make(store, name + ".ln_kv", dim, rng);
  b.q = Linear::make(store, name + ".q", dim, dim, rng, false);
  b.k = Linear::make(store, name + ".k", dim, dim, rng, false);
  b.v = Linear::make(store, name + ".v", dim, dim, rng, false);
  b.o = Linear::make(store, name + ".o", dim, dim, rng, true, residual_gain);
  b.ln2 = LayerNorm::make(store, name + ".ln2", dim, rng);
  b.mlp = SwiGlu::make(store, name + ".mlp", dim, hidden, rng, residual_gain);
  return b;
}

VarF CrossAttentionBlock::forward(TapeF& tape, const VarF& queries, const VarF& context,
                                  std::span<const std::int64_t> q_offsets, std::span<const std::int64_t> kv_offsets,
                                  ad::AttentionMode mode) const {
  const auto hq = ln_q.forward(tape, queries);
  const auto hc = ln_kv.forward(tape, context);
  const auto att = ad::packed_attention(q.forward(tape, hq), k.forward(tape, hc), v.forward(tape, hc), q_offsets,
                                        kv_offsets, heads, mode);
  const auto x1 = ad::add(queries, o.forward(tape, att));
  return ad::add(x1, mlp.forward(tape, ln2.forward(tape, x1)));
}

}  // namespace splatedit::nn
