// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ad/attention.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>

namespace splatedit::ad {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CStrided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using MStrided = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

struct Layout {
  std::int64_t groups = 0;
  std::int64_t dim = 0;
  std::int64_t head_dim = 0;
};

template <class T>
Layout check_layout(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>* v,
                    std::span<const std::int64_t> qo, std::span<const std::int64_t> ko, int heads,
                    AttentionMode mode) {
  if (q.rank() != 2 || k.rank() != 2 || (v != nullptr && v->rank() != 2)) {
    throw ShapeError("packed_attention: q, k, v must be matrices");
  }
  const auto d = q.dim(1);
  if (k.dim(1) != d || (v != nullptr && (v->dim(1) != d || v->dim(0) != k.dim(0)))) {
    throw ShapeError("packed_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                     (v != nullptr ? ", v " + shape_str(v->shape()) : std::string()));
  }
  if (heads < 1 || d % heads != 0) throw ShapeError("packed_attention: width not divisible by head count");
  if (qo.size() != ko.size() || qo.size() < 2) throw ContractError("packed_attention: offset lists differ");
  if (qo.front() != 0 || ko.front() != 0 || qo.back() != q.dim(0) || ko.back() != k.dim(0)) {
    throw ContractError("packed_attention: offsets must span all rows");
  }
  for (std::size_t g = 0; g + 1 < qo.size(); ++g) {
    if (qo[g + 1] < qo[g] || ko[g + 1] < ko[g]) throw ContractError("packed_attention: offsets decrease");
    if (qo[g + 1] > qo[g] && ko[g + 1] == ko[g]) {
      throw ContractError("packed_attention: queries in a group without keys");
    }
    if (mode == AttentionMode::kIdentity && qo[g + 1] - qo[g] != ko[g + 1] - ko[g]) {
      throw ContractError("packed_attention: identity mode needs equal query and key groups");
    }
  }
  return Layout{static_cast<std::int64_t>(qo.size()) - 1, d, d / heads};
}

// Probabilities for every (group, head) block, group-major.
template <class T>
std::vector<RowMat<T>> compute_probs(const Tensor<T>& q, const Tensor<T>& k, std::span<const std::int64_t> qo,
                                     std::span<const std::int64_t> ko, int heads, AttentionMode mode,
                                     const Layout& lay) {
  std::vector<RowMat<T>> probs;
  probs.reserve(static_cast<std::size_t>(lay.groups * heads));
  const T scale = T{1} / std::sqrt(static_cast<T>(lay.head_dim));
  for (std::int64_t g = 0; g < lay.groups; ++g) {
    const auto q0 = qo[static_cast<std::size_t>(g)], nq = qo[static_cast<std::size_t>(g + 1)] - q0;
    const auto k0 = ko[static_cast<std::size_t>(g)], nk = ko[static_cast<std::size_t>(g + 1)] - k0;
    for (int h = 0; h < heads; ++h) {
      RowMat<T> p(nq, nk);
      if (mode == AttentionMode::kIdentity) {
        p.setIdentity();
      } else if (mode == AttentionMode::kUniform) {
        p.setConstant(nk > 0 ? T{1} / static_cast<T>(nk) : T{0});
      } else if (nq > 0) {
        CStrided<T> qh(q.ptr() + q0 * lay.dim + h * lay.head_dim, nq, lay.head_dim, Eigen::OuterStride<>(lay.dim));
        CStrided<T> kh(k.ptr() + k0 * lay.dim + h * lay.head_dim, nk, lay.head_dim, Eigen::OuterStride<>(lay.dim));
        p.noalias() = (qh * kh.transpose()) * scale;
        for (std::int64_t r = 0; r < nq; ++r) {
          const T mx = p.row(r).maxCoeff();
          p.row(r) = (p.row(r).array() - mx).exp();
          p.row(r) /= p.row(r).sum();
        }
      }
      probs.push_back(std::move(p));
    }
  }
  return probs;
}

}  // namespace

std::vector<std::int64_t> offsets_from_lengths(std::span<const std::int64_t> lengths) {
  std::vector<std::int64_t> off(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 0) throw ContractError("negative group length");
    off[i + 1] = off[i] + lengths[i];
  }
  return off;
}

template <class T>
std::vector<Tensor<T>> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::span<const std::int64_t> qo,
                                         std::span<const std::int64_t> ko, int heads, AttentionMode mode) {
  const auto lay = check_layout<T>(q, k, nullptr, qo, ko, heads, mode);
  auto probs = compute_probs(q, k, qo, ko, heads, mode, lay);
  std::vector<Tensor<T>> out;
  out.reserve(probs.size());
  for (auto& p : probs) {
    Tensor<T> t(Shape{p.rows(), p.cols()});
    std::copy(p.data(), p.data() + p.size(), t.ptr());
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
Var<T> packed_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::span<const std::int64_t> q_offsets,
                        std::span<const std::int64_t> kv_offsets, int heads, AttentionMode mode) {
  if (!q.valid()) throw ContractError("packed_attention on an unbound variable");
  auto& tape = *q.tape();
  const auto lay = check_layout(q.value(), k.value(), &v.value(), q_offsets, kv_offsets, heads, mode);
  auto probs = std::make_shared<std::vector<RowMat<T>>>(
      compute_probs(q.value(), k.value(), q_offsets, kv_offsets, heads, mode, lay));

  const auto nq_total = q.value().dim(0);
  Tensor<T> out(Shape{nq_total, lay.dim});
  const Eigen::OuterStride<> stride(lay.dim);
  for (std::int64_t g = 0; g < lay.groups; ++g) {
    const auto q0 = q_offsets[static_cast<std::size_t>(g)];
    const auto nq = q_offsets[static_cast<std::size_t>(g + 1)] - q0;
    const auto k0 = kv_offsets[static_cast<std::size_t>(g)];
    const auto nk = kv_offsets[static_cast<std::size_t>(g + 1)] - k0;
    if (nq == 0) continue;
    for (int h = 0; h < heads; ++h) {
      const auto& p = (*probs)[static_cast<std::size_t>(g * heads + h)];
      CStrided<T> vh(v.value().ptr() + k0 * lay.dim + h * lay.head_dim, nk, lay.head_dim, stride);
      MStrided<T> oh(out.ptr() + q0 * lay.dim + h * lay.head_dim, nq, lay.head_dim, stride);
      oh.noalias() = p * vh;
    }
  }

  std::vector<std::int64_t> qo(q_offsets.begin(), q_offsets.end());
  std::vector<std::int64_t> ko(kv_offsets.begin(), kv_offsets.end());
  return tape.record(std::move(out), {q, k, v}, [q, k, v, qo, ko, heads, mode, lay, probs](Tape<T>& t, const Tensor<T>& gout) {
    const T scale = T{1} / std::sqrt(static_cast<T>(lay.head_dim));
    const Eigen::OuterStride<> st(lay.dim);
    Tensor<T>* gq = mode == AttentionMode::kSoftmax ? t.grad_buffer(q) : nullptr;
    Tensor<T>* gk = mode == AttentionMode::kSoftmax ? t.grad_buffer(k) : nullptr;
    Tensor<T>* gv = t.grad_buffer(v);
    for (std::int64_t g = 0; g < lay.groups; ++g) {
      const auto q0 = qo[static_cast<std::size_t>(g)], nq = qo[static_cast<std::size_t>(g + 1)] - q0;
      const auto k0 = ko[static_cast<std::size_t>(g)], nk = ko[static_cast<std::size_t>(g + 1)] - k0;
      if (nq == 0) continue;
      for (int h = 0; h < heads; ++h) {
        const auto& p = (*probs)[static_cast<std::size_t>(g * heads + h)];
        const auto off_q = q0 * lay.dim + h * lay.head_dim;
        const auto off_k = k0 * lay.dim + h * lay.head_dim;
        CStrided<T> go(gout.ptr() + off_q, nq, lay.head_dim, st);
        if (gv != nullptr) {
          MStrided<T> gvh(gv->ptr() + off_k, nk, lay.head_dim, st);
          gvh.noalias() += p.transpose() * go;
        }
        if (gq == nullptr && gk == nullptr) continue;
        CStrided<T> vh(v.value().ptr() + off_k, nk, lay.head_dim, st);
        RowMat<T> dp = go * vh.transpose();
        RowMat<T> ds(nq, nk);
        for (std::int64_t r = 0; r < nq; ++r) {
          const T dot = (dp.row(r).array() * p.row(r).array()).sum();
          ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
        }
        ds *= scale;
        if (gq != nullptr) {
          CStrided<T> kh(k.value().ptr() + off_k, nk, lay.head_dim, st);
          MStrided<T> gqh(gq->ptr() + off_q, nq, lay.head_dim, st);
          gqh.noalias() += ds * kh;
        }
        if (gk != nullptr) {
          CStrided<T> qh(q.value().ptr() + off_q, nq, lay.head_dim, st);
          MStrided<T> gkh(gk->ptr() + off_k, nk, lay.head_dim, st);
          gkh.noalias() += ds.transpose() * qh;
        }
      }
    }
  });
}

template Var<float> packed_attention(const Var<float>&, const Var<float>&, const Var<float>&,
                                     std::span<const std::int64_t>, std::span<const std::int64_t>, int,
                                     AttentionMode);
template Var<double> packed_attention(const Var<double>&, const Var<double>&, const Var<double>&,
                                      std::span<const std::int64_t>, std::span<const std::int64_t>, int,
                                      AttentionMode);
template std::vector<Tensor<float>> attention_weights(const Tensor<float>&, const Tensor<float>&,
                                                      std::span<const std::int64_t>, std::span<const std::int64_t>,
                                                      int, AttentionMode);
template std::vector<Tensor<double>> attention_weights(const Tensor<double>&, const Tensor<double>&,
                                                       std::span<const std::int64_t>, std::span<const std::int64_t>,
                                                       int, AttentionMode);

}  // namespace splatedit::ad
