// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

// splatedit-serve: HTTP edit service for the browser client.

#include <csignal>
#include <cstdio>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "routes.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatedit-serve: interactive edit sessions over HTTP"};
  std::string checkpoint = "checkpoints/smoke/stage2_ttt", host = "127.0.0.1";
  int port = 8080;
  app.add_option("--checkpoint", checkpoint, "Directory with model.json and params.ckpt")->capture_default_str();
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  using namespace splatedit;
  if (!train::has_checkpoint(checkpoint)) {
    std::fprintf(stderr, "error: checkpoint not found in '%s'\n", checkpoint.c_str());
    return 2;
  }
  const auto models = train::Models::load(checkpoint);
  service::SessionManager sessions(*models);
  service::EventHub events(sessions);
  httplib::Server server;
  service::register_routes(server, sessions, events);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("listening on {}:{}", host, port);
  const bool ok = server.listen(host, port);
  events.close();
  return ok ? 0 : 1;
}
