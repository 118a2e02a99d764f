// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/splat/camera.hpp"

#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>

#include "splatedit/common/error.hpp"

namespace splatedit::splat {

Mat3 Camera::rotation() const {
  const auto& m = world_to_cam;
  return {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
}

Vec3 Camera::translation() const { return {world_to_cam[3], world_to_cam[7], world_to_cam[11]}; }

Vec3 Camera::center() const { return mul_transposed(rotation(), translation()) * -1.0; }

Vec3 Camera::to_camera(const Vec3& world) const { return mul(rotation(), world) + translation(); }

Vec3 Camera::ray_dir(double u, double v) const {
  const Vec3 d{(u - cx) / fx, (v - cy) / fy, 1.0};
  return normalized(mul_transposed(rotation(), d));
}

void Camera::validate() const {
  if (width < 1 || height < 1) throw ContractError("camera image must be at least 1x1");
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw ContractError("camera intrinsics must be finite with positive focal lengths");
  }
  const auto r = rotation();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += r[static_cast<std::size_t>(3 * i + k)] * r[static_cast<std::size_t>(3 * j + k)];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-6) throw ContractError("camera rotation is not orthonormal");
    }
  }
  const auto& m = world_to_cam;
  if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0) {
    throw ContractError("world_to_cam last row must be (0, 0, 0, 1)");
  }
  for (double v : m) {
    if (!std::isfinite(v)) throw ContractError("world_to_cam has non-finite entries");
  }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg, int width,
                       int height) {
  const Vec3 z = normalized(target - eye);
  Vec3 down = up * -1.0;
  down = down - z * dot(down, z);
  if (norm(down) < 1e-9) throw ContractError("look_at: up is parallel to the view direction");
  const Vec3 y = normalized(down);
  const Vec3 x = cross(y, z);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  const Mat3 r{x[0], x[1], x[2], y[0], y[1], y[2], z[0], z[1], z[2]};
  const Vec3 t = mul(r, eye) * -1.0;
  cam.world_to_cam = {r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2], 0, 0, 0, 1};
  return cam;
}

Camera orbit_camera(const Vec3& center, double radius, double azimuth_deg, double elevation_deg, int width,
                    int height, double fov_y_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 offset{radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az)};
  return Camera::look_at(center + offset, center, {0.0, 1.0, 0.0}, fov_y_deg, width, height);
}

std::vector<Camera> canonical_cameras(const Vec3& center, double radius, int width, int height, double fov_y_deg) {
  static constexpr double kElevations[3] = {20.0, -15.0, 50.0};
  std::vector<Camera> cams;
  for (int i = 0; i < 9; ++i) {
    cams.push_back(orbit_camera(center, radius, 40.0 * i, kElevations[i % 3], width, height, fov_y_deg));
  }
  return cams;
}

void to_json(nlohmann::json& j, const Camera& cam) {
  j = nlohmann::json{{"fx", cam.fx},       {"fy", cam.fy},         {"cx", cam.cx},
                     {"cy", cam.cy},       {"width", cam.width},   {"height", cam.height},
                     {"world_to_cam", cam.world_to_cam}};
}

void from_json(const nlohmann::json& j, Camera& cam) {
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "world_to_cam"}) {
    if (!j.contains(key)) throw FormatError(std::string("camera JSON is missing \"") + key + "\"");
  }
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto& m = j.at("world_to_cam");
  if (!m.is_array() || m.size() != 16) throw FormatError("camera JSON world_to_cam must hold 16 numbers");
  for (std::size_t i = 0; i < 16; ++i) cam.world_to_cam[i] = m[i].get<double>();
  cam.validate();
}

}  // namespace splatedit::splat
