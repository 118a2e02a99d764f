// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/service/protocol.hpp"

#include <array>

#include <nlohmann/json.hpp>

#include "splatedit/common/error.hpp"
#include "splatedit/common/image.hpp"

namespace splatedit::service {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

template <class T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", 0);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what(), 0);
  }
}

}  // namespace

json encode_mask(const voxel::PixelMask& mask) {
  if (mask.data.size() != static_cast<std::size_t>(mask.width) * static_cast<std::size_t>(mask.height)) {
    throw ContractError("mask data does not match its size");
  }
  json rows = json::array();
  for (int y = 0; y < mask.height; ++y) {
    json runs = json::array();
    const auto* row = mask.data.data() + static_cast<std::size_t>(y) * mask.width;
    for (int x = 0; x < mask.width;) {
      if (row[x] == 0) {
        ++x;
        continue;
      }
      int end = x;
      while (end < mask.width && row[end] != 0) ++end;
      runs.push_back(x);
      runs.push_back(end - x);
      x = end;
    }
    rows.push_back(std::move(runs));
  }
  return json{{"width", mask.width}, {"height", mask.height}, {"rows", std::move(rows)}};
}

voxel::PixelMask decode_mask(const json& j) {
  voxel::PixelMask m;
  m.width = field<int>(j, "width");
  m.height = field<int>(j, "height");
  if (m.width < 1 || m.height < 1) throw ParseError("mask must be at least 1x1", 0);
  const auto rows = field<std::vector<std::vector<std::int64_t>>>(j, "rows");
  if (static_cast<int>(rows.size()) != m.height) throw ParseError("mask needs one run list per row", 0);
  m.data.assign(static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height), 0);
  for (int y = 0; y < m.height; ++y) {
    const auto& runs = rows[static_cast<std::size_t>(y)];
    if (runs.size() % 2 != 0) throw ParseError("mask row " + std::to_string(y) + " has an odd run list", 0);
    std::int64_t prev_end = -1;
    for (std::size_t r = 0; r < runs.size(); r += 2) {
      const std::int64_t start = runs[r], len = runs[r + 1];
      if (start <= prev_end || len < 1 || start + len > m.width) {
        throw ParseError("mask row " + std::to_string(y) + " has an invalid run", 0);
      }
      for (std::int64_t x = start; x < start + len; ++x) m.data[static_cast<std::size_t>(y * m.width + x)] = 1;
      prev_end = start + len;
    }
  }
  return m;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) | (i + 1 < bytes.size() ? std::uint32_t{bytes[i + 1]} << 8 : 0) |
                            (i + 2 < bytes.size() ? std::uint32_t{bytes[i + 2]} : 0);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> value{};
  value.fill(-1);
  for (int i = 0; i < 64; ++i) value[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4", text.size());
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        n <<= 6;
        continue;
      }
      const int v = value[static_cast<unsigned char>(c)];
      if (v < 0 || pad > 0) throw ParseError("invalid base64 character", i + k);
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 255));
  }
  return out;
}

EditRequest parse_edit_request(const json& j) {
  EditRequest r;
  r.mode = ttt::edit_mode_from_string(field<std::string>(j, "mode"));
  if (!j.contains("views") || !j.at("views").is_array()) throw ParseError("missing field 'views'", 0);
  for (const auto& v : j.at("views")) {
    ttt::EditView e;
    e.view.camera = field<splat::Camera>(v, "camera");
    e.view.camera.validate();
    e.view.image = io::decode_png(base64_decode(field<std::string>(v, "image")));
    if (e.view.image.width != e.view.camera.width || e.view.image.height != e.view.camera.height) {
      throw ContractError("edit image size differs from its camera");
    }
    if (v.contains("mask") && !v.at("mask").is_null()) {
      e.mask = decode_mask(v.at("mask"));
      if (e.mask->width != e.view.image.width || e.mask->height != e.view.image.height) {
        throw ContractError("mask size differs from its image");
      }
    }
    r.views.push_back(std::move(e));
  }
  if (r.views.empty()) throw ContractError("an edit needs at least one view");
  return r;
}

json to_json(const EditRequest& r) {
  json views = json::array();
  for (const auto& v : r.views) {
    json e{{"camera", v.view.camera}, {"image", base64_encode(io::encode_png(v.view.image))}};
    if (v.mask) e["mask"] = encode_mask(*v.mask);
    views.push_back(std::move(e));
  }
  return json{{"mode", ttt::to_string(r.mode)}, {"views", std::move(views)}};
}

json latents_updated_event(const std::string& session, std::int64_t edit_index) {
  return json{{"type", "latents-updated"}, {"session", session}, {"edit_index", edit_index}};
}

}  // namespace splatedit::service
