// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "splatedit/ttt/session.hpp"
#include "splatedit/voxel/grid.hpp"

// Wire formats shared by the CLI, the HTTP service and the browser client.
namespace splatedit::service {

/// Mask JSON: {"width": W, "height": H, "rows": [[start, length, ...], ...]}
/// with one list of (start, length) runs of set pixels per image row.
nlohmann::json encode_mask(const voxel::PixelMask& mask);
/// ParseError on malformed runs (overlapping, unsorted or out of range).
voxel::PixelMask decode_mask(const nlohmann::json& j);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// ParseError on characters outside the standard alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// {"mode": "global"|"local", "views": [{"camera": {...}, "image": <base64 PNG>,
///  "mask": <mask JSON, optional>}, ...]}
struct EditRequest {
  ttt::EditMode mode = ttt::EditMode::kGlobal;
  std::vector<ttt::EditView> views;
};

/// ContractError on an empty view list or a mask/image size mismatch;
/// ParseError on malformed payloads.
EditRequest parse_edit_request(const nlohmann::json& j);
nlohmann::json to_json(const EditRequest& r);

/// {"type": "latents-updated", "session": id, "edit_index": n}
nlohmann::json latents_updated_event(const std::string& session, std::int64_t edit_index);

}  // namespace splatedit::service
