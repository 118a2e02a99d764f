// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "splatedit/ad/ops.hpp"

// Newton-Schulz orthogonalisation and the Muon inner loop that adapts the
// fast-weight SwiGLU net f_W to map keys onto values.
namespace splatedit::ttt {

/// Odd quintic a x + b x^3 + c x^5 applied to singular values.
using Quintic = std::array<double, 3>;

enum class NsCoefficients {
  /// Per-iteration minimax schedule for singular values in [1e-3, 1]; later
  /// iterations use the convergent (15/8, -5/4, 3/8) tail.
  kSchedule,
  /// The fixed (3.4445, -4.7750, 2.0315) quintic of common Muon practice.
  kClassic,
};

Quintic ns_coefficients(NsCoefficients variant, int iteration);

/// Approximate polar factor U V^T of m after Frobenius pre-normalisation.
/// A zero matrix maps to zero. Differentiable.
template <class T>
ad::Var<T> newton_schulz(const ad::Var<T>& m, int iters = 5, NsCoefficients variant = NsCoefficients::kSchedule);

struct NsResult {
  ad::TensorD value;
  bool zero_input = false;
};
/// Tape-free double-precision version.
NsResult newton_schulz_orth(const ad::TensorD& m, int iters = 5, NsCoefficients variant = NsCoefficients::kSchedule);

struct MuonConfig {
  double lr = 0.02;
  double momentum = 0.9;
  int steps = 5;
  int ns_iters = 5;
  NsCoefficients ns = NsCoefficients::kSchedule;
  /// Treat each update as a constant so gradients reach only W0 and the slow
  /// paths outside the inner loop.
  bool detach_updates = false;
};

/// f_W(x) = down (silu(gate x) * up x), x given as rows. A linear net
/// (f_W(x) = down x, gate and up unused) serves as a probe in tests.
template <class T>
struct FastVars {
  ad::Var<T> gate, up, down;
  bool linear = false;
};

template <class T>
ad::Var<T> fast_apply(const FastVars<T>& w, const ad::Var<T>& x);

/// Mean over rows of ||f_W(k) - v||^2.
template <class T>
ad::Var<T> fast_loss(const FastVars<T>& w, const ad::Var<T>& k, const ad::Var<T>& v);

/// Gradient of fast_loss with respect to (gate, up, down), built from tape
/// ops so that it can itself be differentiated.
template <class T>
FastVars<T> fast_loss_grad(const FastVars<T>& w, const ad::Var<T>& k, const ad::Var<T>& v);

template <class T>
struct AdaptResult {
  FastVars<T> weights;
  std::vector<double> loss_trace;  // steps + 1 entries, before each step and at the end
};

/// Muon inner loop from momentum zero: M <- mu M + G, W <- W - lr NS(M), per
/// fast matrix. ContractError when there are no keys.
template <class T>
AdaptResult<T> muon_adapt(const FastVars<T>& w0, const ad::Var<T>& k, const ad::Var<T>& v, const MuonConfig& cfg);

}  // namespace splatedit::ttt
