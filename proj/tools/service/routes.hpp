// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <string>

#include <httplib.h>

#include "splatedit/service/sessions.hpp"

namespace splatedit::service {

/// Fans session events out to server-sent-event streams.
class EventHub {
 public:
  explicit EventHub(SessionManager& sessions);
  ~EventHub();
  EventHub(const EventHub&) = delete;
  EventHub& operator=(const EventHub&) = delete;

  /// Wakes every stream so it can finish; new streams end immediately.
  void close();

  /// Blocks up to `timeout_ms` for the next event after `cursor`; returns an
  /// empty string on timeout or after close().
  std::string wait(std::size_t& cursor, int timeout_ms);
  bool closed() const;

 private:
  SessionManager& sessions_;
  int token_ = -1;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> events_;  // every event so far, as SSE frames
  bool closed_ = false;
};

/// POST /session, GET /session/{id}, GET /session/{id}/render,
/// POST /session/{id}/edit, POST /session/{id}/reset,
/// GET /session/{id}/snapshot and GET /events.
void register_routes(httplib::Server& server, SessionManager& sessions, EventHub& events);

}  // namespace splatedit::service
