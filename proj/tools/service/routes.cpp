// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "routes.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "splatedit/common/image.hpp"
#include "splatedit/splat/ply.hpp"

namespace splatedit::service {

namespace fs = std::filesystem;
using nlohmann::json;

EventHub::EventHub(SessionManager& sessions) : sessions_(sessions) {
  token_ = sessions_.subscribe([this](const json& event) {
    {
      std::lock_guard lock(mu_);
      events_.push_back("event: " + event.at("type").get<std::string>() + "\ndata: " + event.dump() + "\n\n");
    }
    cv_.notify_all();
  });
}

EventHub::~EventHub() {
  close();
  sessions_.unsubscribe(token_);
}

void EventHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string EventHub::wait(std::size_t& cursor, int timeout_ms) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] { return closed_ || cursor < events_.size(); });
  if (closed_ || cursor >= events_.size()) return {};
  return events_[cursor++];
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

/// Maps library errors onto HTTP statuses.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFound& e) {
      send_json(res, {{"error", e.what()}}, 404);
    } catch (const Conflict& e) {
      send_json(res, {{"error", e.what()}}, 409);
    } catch (const json::exception& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const ContractError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const ParseError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const FormatError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

/// `camera` (camera JSON), or an orbit: azimuth, elevation, distance, width, height, fov.
splat::Camera camera_from_query(const httplib::Request& req) {
  if (req.has_param("camera")) return json::parse(req.get_param_value("camera")).get<splat::Camera>();
  const auto num = [&](const char* key, double fallback) {
    return req.has_param(key) ? std::stod(req.get_param_value(key)) : fallback;
  };
  const int w = static_cast<int>(num("width", 256)), h = static_cast<int>(num("height", w));
  if (w < 1 || h < 1 || w > 4096 || h > 4096) throw ContractError("render size must be within 1..4096");
  return splat::orbit_camera({0, 0, 0}, num("distance", 3.0), num("azimuth", 0.0), num("elevation", 20.0), w, h,
                             num("fov", 45.0));
}

json info_json(const SessionInfo& i) {
  const auto created = std::chrono::duration_cast<std::chrono::milliseconds>(i.created.time_since_epoch()).count();
  return json{{"session", i.id},         {"asset", i.asset},   {"created_ms", created},
              {"edit_count", i.edits},   {"gaussians", i.gaussians}, {"voxels", i.voxels}};
}

std::string temp_file(const std::string& body, const char* suffix) {
  static std::atomic<int> counter{0};
  const auto p = fs::temp_directory_path() /
                 ("splatedit_upload_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + suffix);
  std::ofstream(p, std::ios::binary).write(body.data(), static_cast<std::streamsize>(body.size()));
  return p.string();
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions, EventHub& events) {
  server.Post("/session", guarded([&](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    if (req.get_header_value("Content-Type") == "application/octet-stream") {
      // Raw latent file upload.
      const auto path = temp_file(req.body, ".latents");
      try {
        id = sessions.create(compress::load_latents(path), "upload");
      } catch (...) {
        fs::remove(path);
        throw;
      }
      fs::remove(path);
    } else {
      const auto body = json::parse(req.body);
      if (body.contains("latents")) {
        const auto path = body.at("latents").get<std::string>();
        if (!fs::is_regular_file(path)) throw ContractError("latent file not found: " + path);
        id = sessions.create(compress::load_latents(path), path);
      } else if (body.contains("asset")) {
        const auto path = body.at("asset").get<std::string>();
        if (!fs::is_regular_file(path)) throw ContractError("asset not found: " + path);
        id = sessions.create_from_scene(splat::load_ply(path), path);
      } else {
        throw ContractError("POST /session needs 'latents' or 'asset'");
      }
    }
    send_json(res, info_json(sessions.info(id)), 201);
  }));

  server.Get(R"(/session/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, info_json(sessions.info(req.matches[1])));
  }));

  server.Get(R"(/session/([^/]+)/render)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const auto cam = camera_from_query(req);
    cam.validate();
    const auto r = sessions.render(req.matches[1], cam);
    io::Image img(cam.width, cam.height, 3);
    img.data = r.color;
    const auto png = io::encode_png(img);
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }));

  server.Post(R"(/session/([^/]+)/edit)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    sessions.info(id);  // 404 before parsing the payload
    const auto request = parse_edit_request(json::parse(req.body));
    const auto out = sessions.edit(id, request);
    send_json(res, {{"session", id},
                    {"edit_index", out.edit_index},
                    {"applied", out.report.applied},
                    {"warning", out.report.warning},
                    {"hit_voxels", out.report.hit_voxels},
                    {"gaussians", out.report.gaussians},
                    {"seconds", out.seconds}});
  }));

  server.Post(R"(/session/([^/]+)/reset)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    sessions.reset(req.matches[1]);
    send_json(res, info_json(sessions.info(req.matches[1])));
  }));

  server.Get(R"(/session/([^/]+)/snapshot)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = sessions.snapshot(req.matches[1]);
    res.set_header("Content-Disposition", "attachment; filename=\"session.bin\"");
    res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
  }));

  server.Get("/events", [&](const httplib::Request&, httplib::Response& res) {
    auto cursor = std::make_shared<std::size_t>(0);
    res.set_chunked_content_provider("text/event-stream", [&events, cursor](std::size_t, httplib::DataSink& sink) {
      if (events.closed()) return false;
      auto frame = events.wait(*cursor, 1000);
      if (frame.empty()) frame = ": keep-alive\n\n";
      return sink.write(frame.data(), frame.size());
    });
  });
}

}  // namespace splatedit::service
