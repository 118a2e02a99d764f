// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ttt/session.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "splatedit/common/binio.hpp"
#include "splatedit/common/error.hpp"

namespace splatedit::ttt {

namespace {

constexpr std::string_view kSessionMagic = "SPLTSESS";
constexpr std::uint32_t kSessionVersion = 1;
constexpr double kOccupancyThreshold = 0.01;

ad::TensorF gather(const ad::TensorF& t, const std::vector<std::int64_t>& rows) {
  const std::int64_t d = t.dim(1);
  ad::TensorF out(ad::Shape{static_cast<std::int64_t>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(t.ptr() + rows[i] * d, t.ptr() + (rows[i] + 1) * d, out.ptr() + static_cast<std::int64_t>(i) * d);
  }
  return out;
}

void write_tensor(io::BinaryWriter& w, const ad::TensorF& t) {
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t a = 0; a < t.rank(); ++a) w.put(static_cast<std::uint64_t>(t.dim(a)));
  w.array(std::span<const float>(t.ptr(), static_cast<std::size_t>(t.numel())));
}

ad::TensorF read_tensor(io::BinaryReader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 4) throw FormatError(r.name() + ": bad tensor rank");
  ad::Shape shape;
  std::uint64_t n = 1;
  for (std::uint32_t a = 0; a < rank; ++a) {
    const auto d = r.get<std::uint64_t>();
    if (d > r.size()) throw FormatError(r.name() + ": tensor dimension exceeds file size");
    shape.push_back(static_cast<std::int64_t>(d));
    n *= d;
  }
  if (rank == 0) return {};
  return ad::TensorF(shape, r.array<float>(static_cast<std::size_t>(n)));
}

template <class T>
void write_vec(io::BinaryWriter& w, const std::vector<T>& v) {
  w.put(static_cast<std::uint64_t>(v.size()));
  w.array(std::span<const T>(v));
}

template <class T>
std::vector<T> read_vec(io::BinaryReader& r) {
  return r.array<T>(static_cast<std::size_t>(r.get<std::uint64_t>()));
}

nlohmann::json history_json(const std::vector<HistoryEntry>& history) {
  auto arr = nlohmann::json::array();
  for (const auto& h : history) arr.push_back({{"mode", to_string(h.mode)}, {"cameras", h.cameras}, {"hits", h.hits}});
  return arr;
}

}  // namespace

const char* to_string(EditMode m) { return m == EditMode::kGlobal ? "global" : "local"; }

EditMode edit_mode_from_string(const std::string& s) {
  if (s == "global") return EditMode::kGlobal;
  if (s == "local") return EditMode::kLocal;
  throw ContractError("unknown edit mode '" + s + "' (expected global or local)");
}

std::uint64_t latent_hash(const compress::VoxelLatents& l) {
  std::uint64_t h = io::fnv1a(&l.resolution, sizeof(l.resolution));
  h = io::fnv1a(l.bounds.min.data(), sizeof(double) * 3, h);
  h = io::fnv1a(l.bounds.max.data(), sizeof(double) * 3, h);
  h = io::fnv1a(l.cells.data(), l.cells.size() * sizeof(voxel::CellId), h);
  h = io::fnv1a(l.counts.data(), l.counts.size() * sizeof(std::int64_t), h);
  return io::fnv1a(l.latents.ptr(), static_cast<std::size_t>(l.latents.numel()) * sizeof(float), h);
}

splat::SplatScene Editor::decode_rows(const ad::TensorF& latents, const std::vector<voxel::CellId>& row_cells,
                                      const compress::VoxelLatents& geometry) const {
  if (row_cells.empty()) return splat::SplatScene(comp_.config().sh_degree);
  ad::TapeF tape;
  tape.set_grad_enabled(false);
  const auto grid = voxel::make_grid(geometry.bounds, geometry.resolution);
  return raster::to_scene(comp_.gs_decode(tape, tape.leaf(latents, false), row_cells, grid));
}

EditSession Editor::start(compress::VoxelLatents base) const {
  base.validate();
  if (base.dim() != refiner_.config().dim) {
    throw ContractError("latent width " + std::to_string(base.dim()) + " differs from refiner width " +
                        std::to_string(refiner_.config().dim));
  }
  EditSession s;
  s.base = std::move(base);
  reset(s);
  return s;
}

void Editor::reset(EditSession& s) const {
  s.current = s.base;
  s.scene_cells = s.base.row_cells();
  s.scene = decode_rows(s.base.latents, s.scene_cells, s.base);
  s.fast = refiner_.initial_values();
  s.merge_fast = refiner_.merge_initial_values();
  s.history.clear();
}

ad::TensorF Editor::edit_tokens(const std::vector<EditView>& edits) const {
  if (edits.empty()) throw ContractError("an edit needs at least one view");
  std::vector<lrm::View> views;
  for (const auto& e : edits) views.push_back(e.view);
  return lrm_.encode_views(views).tokens;
}

std::vector<voxel::CellId> Editor::hit_voxels(const EditSession& s, const std::vector<EditView>& edits) const {
  const auto grid = voxel::make_grid(s.current.bounds, s.current.resolution);
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(grid.cell_count()), 0);
  for (std::int64_t i = 0; i < s.scene.size(); ++i) {
    if (s.scene.opacity(i) > kOccupancyThreshold) occupied[static_cast<std::size_t>(s.scene_cells[static_cast<std::size_t>(i)])] = 1;
  }
  std::vector<voxel::CellId> hits;
  for (const auto& e : edits) {
    const auto h = voxel::first_hit_voxels(grid, occupied, e.view.camera, e.mask ? &*e.mask : nullptr);
    hits.insert(hits.end(), h.begin(), h.end());
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

RefineReport Editor::refine(EditSession& s, const std::vector<EditView>& edits, EditMode mode) const {
  const auto tokens = edit_tokens(edits);
  RefineReport report;
  HistoryEntry entry;
  entry.mode = mode;
  for (const auto& e : edits) entry.cameras.push_back(e.view.camera);

  std::vector<std::int64_t> rows;
  std::vector<voxel::CellId> hits;
  if (mode == EditMode::kLocal) {
    hits = hit_voxels(s, edits);
    if (hits.empty()) {
      report.warning = "no voxels hit by the edit views; nothing to refine";
      spdlog::warn("{}", report.warning);
      report.gaussians = s.scene.size();
      return report;
    }
    const std::unordered_set<voxel::CellId> hit_set(hits.begin(), hits.end());
    const auto row_cells = s.current.row_cells();
    for (std::size_t i = 0; i < row_cells.size(); ++i) {
      if (hit_set.count(row_cells[i]) != 0) rows.push_back(static_cast<std::int64_t>(i));
    }
  }

  ad::TapeF tape;
  tape.set_grad_enabled(false);
  std::vector<FastVars<float>> fast;
  for (const auto& w : s.fast) fast.push_back(bind(tape, w));
  const auto out = refiner_.forward(tape, tape.leaf(tokens, false), tape.leaf(s.current.latents, false), fast,
                                    mode == EditMode::kLocal ? &rows : nullptr);
  s.fast.clear();
  for (const auto& w : out.fast) s.fast.push_back(values(w));
  report.adapt_losses = out.adapt_losses;

  if (mode == EditMode::kGlobal) {
    s.current.latents = out.latents.value();
    s.scene_cells = s.current.row_cells();
    s.scene = decode_rows(s.current.latents, s.scene_cells, s.current);
    report.hit_voxels = static_cast<std::int64_t>(s.current.cells.size());
  } else {
    merge_local(s, tokens, hits, rows, gather(out.latents.value(), rows));
    report.hit_voxels = static_cast<std::int64_t>(hits.size());
    entry.hits = hits;
  }
  s.history.push_back(std::move(entry));
  report.applied = true;
  report.gaussians = s.scene.size();
  return report;
}

void Editor::merge_local(EditSession& s, const ad::TensorF& tokens, const std::vector<voxel::CellId>& hits,
                         const std::vector<std::int64_t>& rows, const ad::TensorF& refined) const {
  if (hits.empty()) return;
  const std::unordered_set<voxel::CellId> hit_set(hits.begin(), hits.end());
  const auto originals = gather(s.current.latents, rows);

  ad::TapeF tape;
  tape.set_grad_enabled(false);
  const auto merged = refiner_.merge(tape, tape.leaf(tokens, false), tape.leaf(originals, false),
                                     refiner_.config().kind == LayerKind::kTtt ? bind(tape, s.merge_fast)
                                                                               : FastVars<float>{});
  if (refiner_.config().kind == LayerKind::kTtt) s.merge_fast = values(merged.fast);
  const auto& updated = merged.latents.value();

  // Latents: each hit cell keeps [updated originals ; refined], others unchanged.
  const std::int64_t d = s.current.dim();
  const auto off = s.current.offsets();
  compress::VoxelLatents next = s.current;
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>((s.current.rows() + static_cast<std::int64_t>(rows.size())) * d));
  std::int64_t hit_row = 0;
  std::vector<voxel::CellId> hit_row_cells;
  for (std::size_t g = 0; g < s.current.cells.size(); ++g) {
    const float* src = s.current.latents.ptr() + off[g] * d;
    const std::int64_t k = s.current.counts[g];
    if (hit_set.count(s.current.cells[g]) == 0) {
      data.insert(data.end(), src, src + k * d);
      continue;
    }
    data.insert(data.end(), updated.ptr() + hit_row * d, updated.ptr() + (hit_row + k) * d);
    data.insert(data.end(), refined.ptr() + hit_row * d, refined.ptr() + (hit_row + k) * d);
    hit_row_cells.insert(hit_row_cells.end(), static_cast<std::size_t>(k), s.current.cells[g]);
    next.counts[g] = 2 * k;
    hit_row += k;
  }
  next.latents = ad::TensorF(ad::Shape{s.current.rows() + static_cast<std::int64_t>(rows.size()), d}, std::move(data));

  // Scene: untouched Gaussians, then updated originals, then new ones.
  splat::SplatScene scene(s.scene.sh_degree());
  std::vector<voxel::CellId> cells;
  for (std::int64_t i = 0; i < s.scene.size(); ++i) {
    const auto c = s.scene_cells[static_cast<std::size_t>(i)];
    if (hit_set.count(c) != 0) continue;
    scene.append_from(s.scene, i);
    cells.push_back(c);
  }
  for (const auto* part : {&updated, &refined}) {
    const auto decoded = decode_rows(*part, hit_row_cells, s.current);
    for (std::int64_t i = 0; i < decoded.size(); ++i) scene.append_from(decoded, i);
    cells.insert(cells.end(), hit_row_cells.begin(), hit_row_cells.end());
  }
  s.current = std::move(next);
  s.scene = std::move(scene);
  s.scene_cells = std::move(cells);
}

void save_snapshot(const std::string& path, const EditSession& s) {
  io::BinaryWriter w(path);
  w.bytes(kSessionMagic.data(), kSessionMagic.size());
  w.put(kSessionVersion);
  w.put(latent_hash(s.base));
  w.str32(history_json(s.history).dump());
  compress::write_latents(w, s.current);
  w.put(static_cast<std::uint32_t>(s.fast.size()));
  for (const auto& f : s.fast) {
    for (const auto* t : {&f.gate, &f.up, &f.down}) write_tensor(w, *t);
  }
  for (const auto* t : {&s.merge_fast.gate, &s.merge_fast.up, &s.merge_fast.down}) write_tensor(w, *t);
  w.put(static_cast<std::int32_t>(s.scene.sh_degree()));
  write_vec(w, s.scene.positions);
  write_vec(w, s.scene.log_scales);
  write_vec(w, s.scene.rotations);
  write_vec(w, s.scene.opacity_logits);
  write_vec(w, s.scene.sh);
  write_vec(w, s.scene_cells);
  w.close();
}

EditSession load_snapshot(const std::string& path, const compress::VoxelLatents& base) {
  io::BinaryReader r(path);
  r.expect_magic(kSessionMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kSessionVersion) throw FormatError(path + ": unsupported session version " + std::to_string(version));
  if (r.get<std::uint64_t>() != latent_hash(base)) throw FormatError(path + ": snapshot belongs to different base latents");
  EditSession s;
  s.base = base;
  const auto history = nlohmann::json::parse(r.str32());
  for (const auto& h : history) {
    HistoryEntry e;
    e.mode = edit_mode_from_string(h.at("mode").get<std::string>());
    e.cameras = h.at("cameras").get<std::vector<splat::Camera>>();
    e.hits = h.at("hits").get<std::vector<voxel::CellId>>();
    s.history.push_back(std::move(e));
  }
  s.current = compress::read_latents(r);
  const auto layers = r.get<std::uint32_t>();
  if (layers > 1024) throw FormatError(path + ": bad layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    FastWeights f;
    f.gate = read_tensor(r);
    f.up = read_tensor(r);
    f.down = read_tensor(r);
    s.fast.push_back(std::move(f));
  }
  s.merge_fast.gate = read_tensor(r);
  s.merge_fast.up = read_tensor(r);
  s.merge_fast.down = read_tensor(r);
  s.scene = splat::SplatScene(r.get<std::int32_t>());
  s.scene.positions = read_vec<float>(r);
  s.scene.log_scales = read_vec<float>(r);
  s.scene.rotations = read_vec<float>(r);
  s.scene.opacity_logits = read_vec<float>(r);
  s.scene.sh = read_vec<float>(r);
  s.scene_cells = read_vec<voxel::CellId>(r);
  if (!r.at_end()) throw FormatError(path + ": trailing bytes after session record");
  const auto n = static_cast<std::size_t>(s.scene.size());
  if (s.scene.positions.size() != 3 * n || s.scene.log_scales.size() != 3 * n || s.scene.rotations.size() != 4 * n ||
      s.scene.sh.size() != 3 * n * static_cast<std::size_t>(s.scene.coeffs()) || s.scene_cells.size() != n) {
    throw FormatError(path + ": scene arrays disagree in length");
  }
  return s;
}

}  // namespace splatedit::ttt
