// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splatedit/ad/tape.hpp"

namespace splatedit::ad {

enum class AttentionMode {
  kSoftmax,   ///< scaled dot-product softmax attention
  kUniform,   ///< every query weights its group's keys equally (test hook)
  kIdentity,  ///< query i reads value i only; needs equal query/key groups (test hook)
};

/// Multi-head attention over variable-length groups stored back to back.
///
/// Group g owns query rows [q_offsets[g], q_offsets[g+1]) and key/value rows
/// [kv_offsets[g], kv_offsets[g+1]); queries never see keys of other groups.
/// q is [Nq x D], k and v are [Nk x D], D divisible by `heads`.
template <class T>
Var<T> packed_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        std::span<const std::int64_t> q_offsets, std::span<const std::int64_t> kv_offsets,
                        int heads, AttentionMode mode = AttentionMode::kSoftmax);

/// Attention probabilities for inspection: one row-major [nq x nk] block per
/// (group, head), ordered group-major.
template <class T>
std::vector<Tensor<T>> attention_weights(const Tensor<T>& q, const Tensor<T>& k,
                                         std::span<const std::int64_t> q_offsets,
                                         std::span<const std::int64_t> kv_offsets, int heads,
                                         AttentionMode mode = AttentionMode::kSoftmax);

/// Offsets [0, n0, n0+n1, ...] from group lengths.
std::vector<std::int64_t> offsets_from_lengths(std::span<const std::int64_t> lengths);

}  // namespace splatedit::ad
