// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/service/sessions.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace splatedit::service {

namespace fs = std::filesystem;

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(registry_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  return it->second;
}

std::unique_lock<std::mutex> SessionManager::try_writer(Session& s) const {
  std::unique_lock lock(s.writer_mu, std::try_to_lock);
  if (!lock.owns_lock()) throw Conflict("session '" + s.info.id + "' is being modified; retry");
  return lock;
}

std::string SessionManager::create(compress::VoxelLatents base, const std::string& asset) {
  auto state = std::make_shared<ttt::EditSession>(models_.editor().start(std::move(base)));
  auto s = std::make_shared<Session>();
  s->info.asset = asset;
  s->info.created = std::chrono::system_clock::now();
  s->info.gaussians = state->scene.size();
  s->info.voxels = static_cast<std::int64_t>(state->current.cells.size());
  s->state = std::move(state);

  static thread_local std::mt19937_64 entropy{std::random_device{}()};
  std::unique_lock lock(registry_mu_);
  std::ostringstream id;
  id << std::hex << entropy() << '-' << ++next_id_;
  s->info.id = id.str();
  sessions_.emplace(s->info.id, s);
  return s->info.id;
}

std::string SessionManager::create_from_scene(const splat::SplatScene& scene, const std::string& asset) {
  return create(compress::compress_asset(scene, models_.lrm(), models_.comp()).latents, asset);
}

SessionInfo SessionManager::info(const std::string& id) const {
  const auto s = find(id);
  std::shared_lock lock(s->state_mu);
  return s->info;
}

std::vector<std::string> SessionManager::ids() const {
  std::shared_lock lock(registry_mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

raster::RenderOutput<float> SessionManager::render(const std::string& id, const splat::Camera& cam) const {
  cam.validate();
  const auto s = find(id);
  std::shared_ptr<const ttt::EditSession> state;
  {
    std::shared_lock lock(s->state_mu);
    state = s->state;
  }
  return raster::rasterize(state->scene, cam);
}

EditOutcome SessionManager::edit(const std::string& id, const EditRequest& request) {
  const auto s = find(id);
  const auto writer = try_writer(*s);
  auto next = std::make_shared<ttt::EditSession>(*s->state);
  const auto t0 = std::chrono::steady_clock::now();
  EditOutcome out;
  out.report = models_.editor().refine(*next, request.views, request.mode);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::unique_lock lock(s->state_mu);
    if (out.report.applied) {
      s->state = std::move(next);
      ++s->info.edits;
      s->info.gaussians = s->state->scene.size();
      s->info.voxels = static_cast<std::int64_t>(s->state->current.cells.size());
    }
    out.edit_index = s->info.edits;
  }
  if (out.report.applied) publish(latents_updated_event(id, out.edit_index));
  return out;
}

void SessionManager::reset(const std::string& id) {
  const auto s = find(id);
  const auto writer = try_writer(*s);
  auto next = std::make_shared<ttt::EditSession>(*s->state);
  models_.editor().reset(*next);
  {
    std::unique_lock lock(s->state_mu);
    s->state = std::move(next);
    s->info.edits = 0;
    s->info.gaussians = s->state->scene.size();
    s->info.voxels = static_cast<std::int64_t>(s->state->current.cells.size());
  }
  publish(latents_updated_event(id, 0));
}

std::vector<std::uint8_t> SessionManager::snapshot(const std::string& id) const {
  const auto s = find(id);
  std::shared_ptr<const ttt::EditSession> state;
  {
    std::shared_lock lock(s->state_mu);
    state = s->state;
  }
  const auto path = fs::temp_directory_path() / ("splatedit_snapshot_" + id + ".bin");
  ttt::save_snapshot(path.string(), *state);
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  in.close();
  fs::remove(path);
  return bytes;
}

int SessionManager::subscribe(Listener listener) {
  std::lock_guard lock(listeners_mu_);
  listeners_.emplace(next_listener_, std::move(listener));
  return next_listener_++;
}

void SessionManager::unsubscribe(int token) {
  std::lock_guard lock(listeners_mu_);
  listeners_.erase(token);
}

void SessionManager::publish(const nlohmann::json& event) {
  std::lock_guard lock(listeners_mu_);
  for (const auto& [token, fn] : listeners_) {
    try {
      fn(event);
    } catch (const std::exception& e) {
      spdlog::warn("event listener {} failed: {}", token, e.what());
    }
  }
}

SessionManager::WriterGuard SessionManager::acquire_writer(const std::string& id) {
  const auto s = find(id);
  return WriterGuard(try_writer(*s));
}

}  // namespace splatedit::service
