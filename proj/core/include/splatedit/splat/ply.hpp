// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "splatedit/splat/scene.hpp"

namespace splatedit::splat {

/// Vertex property names written by save_ply, in file order, for `degree`.
std::vector<std::string> ply_property_names(int degree);

/// Binary little-endian .ply in the common splatting layout. Normals are
/// written as zeros. Quaternions are stored raw.
void save_ply(const SplatScene& scene, const std::string& path);

/// Reads the layout written by save_ply; property order may differ but every
/// required property must be present and float-typed. The SH degree is
/// inferred from the f_rest_* count. Quaternions are renormalised only when
/// their norm is off by more than 1e-6, so saved unit quaternions round-trip
/// bit for bit.
///
/// Errors: FormatError naming a missing property; ParseError with byte offset
/// for a malformed header or truncated body.
SplatScene load_ply(const std::string& path);

}  // namespace splatedit::splat
