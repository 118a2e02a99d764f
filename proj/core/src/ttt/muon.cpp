// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ttt/muon.hpp"

#include <cmath>

#include "splatedit/common/error.hpp"

namespace splatedit::ttt {

namespace {

// Greedy minimax fits: each polynomial minimises max |p(x) - 1| over the
// interval the previous ones leave, starting from [1e-3, 1].
constexpr std::array<Quintic, 5> kSchedule{{
    {8.393921419415145, -24.560835496834855, 18.15852018056013},
    {4.1028953713145375, -2.9308308064069184, 0.5260424834048382},
    {3.9690454054501827, -2.95832128963975, 0.5633260586252613},
    {3.30610936707109, -2.479307053194683, 0.5090093180598871},
    {2.2901820412304, -1.659549870304263, 0.41782651640562407},
}};
constexpr Quintic kConvergent{15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0};
constexpr Quintic kClassic{3.4445, -4.7750, 2.0315};
constexpr double kNormEps = 1e-7;

}  // namespace

Quintic ns_coefficients(NsCoefficients variant, int iteration) {
  if (variant == NsCoefficients::kClassic) return kClassic;
  if (iteration >= 0 && iteration < static_cast<int>(kSchedule.size())) {
    return kSchedule[static_cast<std::size_t>(iteration)];
  }
  return kConvergent;
}

template <class T>
ad::Var<T> newton_schulz(const ad::Var<T>& m, int iters, NsCoefficients variant) {
  if (m.value().rank() != 2) throw ContractError("newton_schulz expects a matrix");
  const bool tall = m.value().dim(0) > m.value().dim(1);
  auto x = tall ? ad::transpose(m) : m;
  const auto inv = ad::reciprocal(ad::add_scalar(ad::sqrt(ad::sum(ad::square(x))), static_cast<T>(kNormEps)));
  x = ad::mul_scalar(x, inv);
  for (int i = 0; i < iters; ++i) {
    const auto [a, b, c] = ns_coefficients(variant, i);
    const auto g = ad::matmul_nt(x, x);
    const auto poly = ad::add(ad::scale(g, static_cast<T>(b)), ad::scale(ad::matmul(g, g), static_cast<T>(c)));
    x = ad::add(ad::scale(x, static_cast<T>(a)), ad::matmul(poly, x));
  }
  return tall ? ad::transpose(x) : x;
}

NsResult newton_schulz_orth(const ad::TensorD& m, int iters, NsCoefficients variant) {
  NsResult out;
  double sq = 0;
  for (double v : m.storage()) sq += v * v;
  out.zero_input = sq == 0.0;
  ad::TapeD tape;
  tape.set_grad_enabled(false);
  out.value = newton_schulz(tape.leaf(m, false), iters, variant).value();
  return out;
}

template <class T>
ad::Var<T> fast_apply(const FastVars<T>& w, const ad::Var<T>& x) {
  if (w.linear) return ad::matmul_nt(x, w.down);
  return ad::swiglu_mlp(x, w.gate, w.up, w.down);
}

template <class T>
ad::Var<T> fast_loss(const FastVars<T>& w, const ad::Var<T>& k, const ad::Var<T>& v) {
  const auto r = ad::sub(fast_apply(w, k), v);
  return ad::scale(ad::sum(ad::square(r)), static_cast<T>(1.0 / static_cast<double>(k.value().dim(0))));
}

template <class T>
FastVars<T> fast_loss_grad(const FastVars<T>& w, const ad::Var<T>& k, const ad::Var<T>& v) {
  const auto n = static_cast<double>(k.value().dim(0));
  FastVars<T> g;
  g.linear = w.linear;
  if (w.linear) {
    const auto dy = ad::scale(ad::sub(ad::matmul_nt(k, w.down), v), static_cast<T>(2.0 / n));
    g.down = ad::matmul(ad::transpose(dy), k);
    return g;
  }
  const auto a = ad::matmul_nt(k, w.gate);  // [N x h]
  const auto b = ad::matmul_nt(k, w.up);
  const auto s = ad::silu(a);
  const auto h = ad::mul(s, b);
  const auto dy = ad::scale(ad::sub(ad::matmul_nt(h, w.down), v), static_cast<T>(2.0 / n));  // [N x d]
  const auto dh = ad::matmul(dy, w.down);                                                     // [N x h]
  const auto da = ad::mul(ad::mul(dh, b), ad::silu_deriv(a));
  const auto db = ad::mul(dh, s);
  g.down = ad::matmul(ad::transpose(dy), h);
  g.gate = ad::matmul(ad::transpose(da), k);
  g.up = ad::matmul(ad::transpose(db), k);
  return g;
}

template <class T>
AdaptResult<T> muon_adapt(const FastVars<T>& w0, const ad::Var<T>& k, const ad::Var<T>& v, const MuonConfig& cfg) {
  if (k.value().rank() != 2 || k.value().dim(0) == 0) throw ContractError("muon_adapt needs at least one key");
  if (v.value().dim(0) != k.value().dim(0)) throw ContractError("keys and values differ in count");
  AdaptResult<T> out;
  out.weights = w0;
  auto& w = out.weights;
  std::array<ad::Var<T>, 3> mom;
  bool have_mom = false;
  const auto lr = static_cast<T>(cfg.lr);
  const auto mu = static_cast<T>(cfg.momentum);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto g = fast_loss_grad(w, k, v);
    out.loss_trace.push_back(static_cast<double>(fast_loss(w, k, v).value().item()));
    std::array<ad::Var<T>*, 3> ws{&w.gate, &w.up, &w.down};
    const std::array<const ad::Var<T>*, 3> gs{&g.gate, &g.up, &g.down};
    for (std::size_t i = w.linear ? 2 : 0; i < 3; ++i) {
      mom[i] = have_mom ? ad::add(ad::scale(mom[i], mu), *gs[i]) : *gs[i];
      auto upd = newton_schulz(mom[i], cfg.ns_iters, cfg.ns);
      if (cfg.detach_updates) upd = ad::detach(upd);
      *ws[i] = ad::sub(*ws[i], ad::scale(upd, lr));
    }
    have_mom = true;
  }
  out.loss_trace.push_back(static_cast<double>(fast_loss(w, k, v).value().item()));
  return out;
}

#define SPLATEDIT_INSTANTIATE(T)                                                                           \
  template ad::Var<T> newton_schulz(const ad::Var<T>&, int, NsCoefficients);                              \
  template ad::Var<T> fast_apply(const FastVars<T>&, const ad::Var<T>&);                                  \
  template ad::Var<T> fast_loss(const FastVars<T>&, const ad::Var<T>&, const ad::Var<T>&);                \
  template FastVars<T> fast_loss_grad(const FastVars<T>&, const ad::Var<T>&, const ad::Var<T>&);          \
  template AdaptResult<T> muon_adapt(const FastVars<T>&, const ad::Var<T>&, const ad::Var<T>&, const MuonConfig&);

SPLATEDIT_INSTANTIATE(float)
SPLATEDIT_INSTANTIATE(double)

#undef SPLATEDIT_INSTANTIATE

}  // namespace splatedit::ttt
