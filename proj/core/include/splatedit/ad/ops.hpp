// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splatedit/ad/tape.hpp"

// Differentiable operations. Matrices are rank-2 row-major tensors; the
// elementwise family accepts any rank but both operands must share a shape.
// Broadcasting is limited to a row vector applied to every row (add_row /
// mul_row) and a scalar variable (mul_scalar).
namespace splatedit::ad {

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// a · bᵀ, the layout used by linear layers with [out × in] weights.
template <class T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> transpose(const Var<T>& a);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& a, T s);
template <class T>
Var<T> add_scalar(const Var<T>& a, T s);
/// Multiplies every element of `a` by the single element of `s`.
template <class T>
Var<T> mul_scalar(const Var<T>& a, const Var<T>& s);
template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row);
template <class T>
Var<T> mul_row(const Var<T>& a, const Var<T>& row);

template <class T>
Var<T> sigmoid(const Var<T>& a);
template <class T>
Var<T> silu(const Var<T>& a);
/// d/dx silu(x) = σ(x)(1 + x(1 − σ(x))); differentiable itself, which the
/// unrolled fast-weight updates rely on.
template <class T>
Var<T> silu_deriv(const Var<T>& a);
template <class T>
Var<T> tanh(const Var<T>& a);
template <class T>
Var<T> exp(const Var<T>& a);
template <class T>
Var<T> square(const Var<T>& a);
template <class T>
Var<T> sqrt(const Var<T>& a);
template <class T>
Var<T> reciprocal(const Var<T>& a);
/// Elementwise clamp; the gradient is passed through only strictly inside (lo, hi).
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi);

template <class T>
Var<T> sum(const Var<T>& a);
template <class T>
Var<T> mean(const Var<T>& a);
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b);

/// Softmax over the last dimension with max subtraction. NaN inputs propagate.
template <class T>
Var<T> softmax_lastdim(const Var<T>& x);
template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps);
/// down · (silu(gate · x) ⊙ (up · x)) applied row-wise: x [n×d], gate/up [h×d], down [d_out×h].
template <class T>
Var<T> swiglu_mlp(const Var<T>& x, const Var<T>& gate_w, const Var<T>& up_w, const Var<T>& down_w);

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts);
template <class T>
Var<T> slice_cols(const Var<T>& a, std::int64_t begin, std::int64_t end);
template <class T>
Var<T> slice_rows(const Var<T>& a, std::int64_t begin, std::int64_t end);
/// out[i] = a[index[i]]; backward scatter-adds, so repeated indices are fine.
template <class T>
Var<T> gather_rows(const Var<T>& a, std::span<const std::int64_t> index);
/// Copy of `base` with rows `index[i]` replaced by `values[i]`. Indices must be distinct.
template <class T>
Var<T> put_rows(const Var<T>& base, std::span<const std::int64_t> index, const Var<T>& values);
/// Mean of each row segment [offsets[g], offsets[g+1]); result has one row per segment.
template <class T>
Var<T> segment_mean(const Var<T>& a, std::span<const std::int64_t> offsets);
template <class T>
Var<T> reshape(const Var<T>& a, Shape shape);
/// Same value, no gradient flows to `a`'s ancestors.
template <class T>
Var<T> detach(const Var<T>& a);

/// Plain (tape-free) products used by oracles and inference helpers.
template <class T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> matmul_nt_values(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace splatedit::ad
