// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "splatedit/service/protocol.hpp"
#include "splatedit/train/trainer.hpp"

namespace splatedit::service {

/// Unknown session id.
class NotFound : public Error {
 public:
  using Error::Error;
};

/// Another mutation of the same session is in progress; retry later.
class Conflict : public Error {
 public:
  using Error::Error;
};

struct SessionInfo {
  std::string id;
  std::string asset;
  std::chrono::system_clock::time_point created;
  std::int64_t edits = 0;
  std::int64_t gaussians = 0;
  std::int64_t voxels = 0;
};

struct EditOutcome {
  std::int64_t edit_index = 0;  // 1-based count after this edit
  ttt::RefineReport report;
  double seconds = 0;
};

/// Live edit sessions over one set of trained models. Each session has one
/// writer at a time (a second concurrent mutation gets Conflict) and any
/// number of concurrent renders. Edits are computed on a copy and swapped
/// in, so a render sees either the pre- or the post-edit state.
class SessionManager {
 public:
  using Listener = std::function<void(const nlohmann::json& event)>;

  explicit SessionManager(const train::Models& models) : models_(models) {}
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  std::string create(compress::VoxelLatents base, const std::string& asset);
  /// Runs Stage I on the scene first.
  std::string create_from_scene(const splat::SplatScene& scene, const std::string& asset);

  SessionInfo info(const std::string& id) const;
  std::vector<std::string> ids() const;

  raster::RenderOutput<float> render(const std::string& id, const splat::Camera& cam) const;
  EditOutcome edit(const std::string& id, const EditRequest& request);
  void reset(const std::string& id);
  /// Snapshot file contents (see ttt::save_snapshot).
  std::vector<std::uint8_t> snapshot(const std::string& id) const;

  /// Listeners run on the editing thread after each edit or reset.
  int subscribe(Listener listener);
  void unsubscribe(int token);

  /// Holds a session's writer lock; while alive, edits and resets of that
  /// session fail with Conflict.
  class WriterGuard {
   public:
    WriterGuard(WriterGuard&&) = default;
    ~WriterGuard() = default;

   private:
    friend class SessionManager;
    explicit WriterGuard(std::unique_lock<std::mutex> lock) : lock_(std::move(lock)) {}
    std::unique_lock<std::mutex> lock_;
  };
  WriterGuard acquire_writer(const std::string& id);

 private:
  struct Session {
    SessionInfo info;
    mutable std::shared_mutex state_mu;  // readers render, the writer swaps
    std::mutex writer_mu;
    std::shared_ptr<const ttt::EditSession> state;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  std::unique_lock<std::mutex> try_writer(Session& s) const;
  void publish(const nlohmann::json& event);

  const train::Models& models_;
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex listeners_mu_;
  std::map<int, Listener> listeners_;
  int next_listener_ = 0;
  std::uint64_t next_id_ = 0;
};

}  // namespace splatedit::service
