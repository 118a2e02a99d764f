// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "splatedit/ad/tensor.hpp"

namespace splatedit::ad {

/// Named float tensors in file order.
using NamedTensors = std::vector<std::pair<std::string, TensorF>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "SPLTCKPT", u32 version, u64 count, then per tensor: u32 name
/// length, name bytes, u32 rank, rank x u64 dims, numel x f32. All little endian.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace splatedit::ad
