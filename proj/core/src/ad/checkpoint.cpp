// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ad/checkpoint.hpp"

#include "splatedit/common/binio.hpp"

namespace splatedit::ad {

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  io::BinaryWriter w(path);
  w.bytes("SPLTCKPT", 8);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str32(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.array(t.data());
  }
  w.close();
}

NamedTensors load_checkpoint(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("SPLTCKPT");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version), 8);
  }
  const auto count = r.get<std::uint64_t>();
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = r.str32();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ParseError(path + ": implausible rank for " + name, r.offset());
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
    auto data = r.array<float>(static_cast<std::size_t>(shape_numel(shape)));
    out.emplace_back(std::move(name), TensorF(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw ParseError(path + ": trailing bytes after checkpoint", r.offset());
  return out;
}

}  // namespace splatedit::ad
