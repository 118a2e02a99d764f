// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ttt/refiner.hpp"

#include <cmath>

#include "splatedit/common/error.hpp"

namespace splatedit::ttt {

const char* to_string(LayerKind k) { return k == LayerKind::kTtt ? "ttt" : "cross-attention"; }

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "ttt") return LayerKind::kTtt;
  if (s == "cross-attention" || s == "cross") return LayerKind::kCrossAttention;
  throw ContractError("unknown refiner layer kind '" + s + "'");
}

FastVars<float> bind(ad::TapeF& tape, const FastWeights& w) {
  FastVars<float> v;
  v.gate = tape.leaf(w.gate, false);
  v.up = tape.leaf(w.up, false);
  v.down = tape.leaf(w.down, false);
  return v;
}

FastWeights values(const FastVars<float>& w) { return {w.gate.value(), w.up.value(), w.down.value()}; }

TttBlock TttBlock::make(nn::ParamStore& store, const std::string& name, const TttConfig& cfg, Rng& rng) {
  const std::int64_t d = cfg.dim;
  const std::int64_t h = cfg.fast_hidden;
  TttBlock b;
  b.ln = nn::LayerNorm::make(store, name + ".ln", d, rng);
  b.wk = nn::Linear::make(store, name + ".wk", d, d, rng, false);
  b.wv = nn::Linear::make(store, name + ".wv", d, d, rng, false);
  b.wq = nn::Linear::make(store, name + ".wq", d, d, rng, false);
  b.wqv = nn::Linear::make(store, name + ".wqv", d, d, rng, false);
  b.out = nn::Linear::make(store, name + ".out", d, d, rng, true, 0.2);
  b.ln2 = nn::LayerNorm::make(store, name + ".ln2", d, rng);
  b.mlp = nn::SwiGlu::make(store, name + ".mlp", d, cfg.mlp_hidden, rng, 0.2);
  const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
  b.gate0 = &store.create(name + ".w0.gate", ad::Shape{h, d}, nn::Init::normal(s_in), rng);
  b.up0 = &store.create(name + ".w0.up", ad::Shape{h, d}, nn::Init::normal(s_in), rng);
  b.down0 = &store.create(name + ".w0.down", ad::Shape{d, h}, nn::Init::normal(1.0 / std::sqrt(static_cast<double>(h))),
                          rng);
  return b;
}

FastVars<float> TttBlock::initial(ad::TapeF& tape) const {
  FastVars<float> w;
  w.gate = tape.param(*gate0);
  w.up = tape.param(*up0);
  w.down = tape.param(*down0);
  return w;
}

FastWeights TttBlock::initial_values() const { return {gate0->value, up0->value, down0->value}; }

AdaptResult<float> TttBlock::adapt(ad::TapeF& tape, const FastVars<float>& fast, const ad::VarF& tokens,
                                   const MuonConfig& muon) const {
  const auto h = ln.forward(tape, tokens);
  return muon_adapt(fast, wk.forward(tape, h), wv.forward(tape, h), muon);
}

ad::VarF TttBlock::apply(ad::TapeF& tape, const FastVars<float>& fast, const ad::VarF& x, bool voxel) const {
  const auto h = ln.forward(tape, x);
  const auto q = (voxel ? wqv : wq).forward(tape, h);
  const auto x1 = ad::add(x, out.forward(tape, fast_apply(fast, q)));
  return ad::add(x1, mlp.forward(tape, ln2.forward(tape, x1)));
}

CrossLayer CrossLayer::make(nn::ParamStore& store, const std::string& name, const TttConfig& cfg, Rng& rng) {
  CrossLayer c;
  c.voxel = nn::CrossAttentionBlock::make(store, name + ".voxel", cfg.dim, cfg.mlp_hidden, cfg.heads, rng, 0.2);
  c.image_ln = nn::LayerNorm::make(store, name + ".image_ln", cfg.dim, rng);
  c.image_mlp = nn::SwiGlu::make(store, name + ".image_mlp", cfg.dim, cfg.mlp_hidden, rng, 0.2);
  return c;
}

Refiner::Refiner(const TttConfig& cfg, nn::ParamStore& store, Rng& rng) : cfg_(cfg) {
  if (cfg.layers < 0 || cfg.dim <= 0) throw ContractError("bad refiner dimensions");
  for (int l = 0; l < cfg.layers; ++l) {
    const auto name = "ttt.layer" + std::to_string(l);
    if (cfg.kind == LayerKind::kTtt) {
      blocks_.push_back(TttBlock::make(store, name, cfg, rng));
    } else {
      cross_.push_back(CrossLayer::make(store, name, cfg, rng));
    }
  }
  if (cfg.kind == LayerKind::kTtt) {
    merge_block_ = TttBlock::make(store, "ttt.merge", cfg, rng);
  } else {
    merge_cross_ = nn::CrossAttentionBlock::make(store, "ttt.merge", cfg.dim, cfg.mlp_hidden, cfg.heads, rng, 0.2);
  }
}

std::vector<FastVars<float>> Refiner::initial(ad::TapeF& tape) const {
  std::vector<FastVars<float>> out;
  for (const auto& b : blocks_) out.push_back(b.initial(tape));
  return out;
}

std::vector<FastWeights> Refiner::initial_values() const {
  std::vector<FastWeights> out;
  for (const auto& b : blocks_) out.push_back(b.initial_values());
  return out;
}

FastVars<float> Refiner::merge_initial(ad::TapeF& tape) const {
  return cfg_.kind == LayerKind::kTtt ? merge_block_.initial(tape) : FastVars<float>{};
}

FastWeights Refiner::merge_initial_values() const {
  return cfg_.kind == LayerKind::kTtt ? merge_block_.initial_values() : FastWeights{};
}

StreamState Refiner::forward(ad::TapeF& tape, const ad::VarF& tokens, const ad::VarF& latents,
                             const std::vector<FastVars<float>>& fast, const std::vector<std::int64_t>* rows) const {
  if (tokens.value().rank() != 2 || tokens.value().dim(0) == 0) throw ContractError("refine needs at least one edit token");
  if (tokens.value().dim(1) != cfg_.dim || latents.value().dim(1) != cfg_.dim) {
    throw ContractError("token or latent width differs from refiner width " + std::to_string(cfg_.dim));
  }
  if (cfg_.kind == LayerKind::kTtt && fast.size() != blocks_.size()) {
    throw ContractError("expected fast weights for " + std::to_string(blocks_.size()) + " layers");
  }
  StreamState s;
  s.tokens = tokens;
  auto v = rows != nullptr ? ad::gather_rows(latents, *rows) : latents;
  if (cfg_.kind == LayerKind::kTtt) {
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const auto& b = blocks_[l];
      auto adapted = b.adapt(tape, fast[l], s.tokens, cfg_.muon);
      s.tokens = b.apply(tape, adapted.weights, s.tokens, false);
      v = b.apply(tape, adapted.weights, v, true);
      s.fast.push_back(adapted.weights);
      s.adapt_losses.push_back(std::move(adapted.loss_trace));
    }
  } else {
    for (const auto& c : cross_) {
      const std::vector<std::int64_t> q_off{0, v.value().dim(0)};
      const std::vector<std::int64_t> kv_off{0, s.tokens.value().dim(0)};
      v = c.voxel.forward(tape, v, s.tokens, q_off, kv_off);
      s.tokens = ad::add(s.tokens, c.image_mlp.forward(tape, c.image_ln.forward(tape, s.tokens)));
    }
  }
  s.latents = rows != nullptr ? ad::put_rows(latents, *rows, v) : v;
  return s;
}

Refiner::MergeResult Refiner::merge(ad::TapeF& tape, const ad::VarF& tokens, const ad::VarF& latents,
                                    const FastVars<float>& fast) const {
  MergeResult r;
  if (cfg_.kind == LayerKind::kTtt) {
    auto adapted = merge_block_.adapt(tape, fast, tokens, cfg_.muon);
    r.latents = merge_block_.apply(tape, adapted.weights, latents, true);
    r.fast = adapted.weights;
  } else {
    const std::vector<std::int64_t> q_off{0, latents.value().dim(0)};
    const std::vector<std::int64_t> kv_off{0, tokens.value().dim(0)};
    r.latents = merge_cross_.forward(tape, latents, tokens, q_off, kv_off);
  }
  return r;
}

}  // namespace splatedit::ttt
