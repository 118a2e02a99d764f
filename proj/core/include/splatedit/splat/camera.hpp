// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "splatedit/common/vec.hpp"

namespace splatedit::splat {

/// Pinhole camera, OpenCV convention: +z forward, +x right, +y down in the
/// image. Pixel (px, py) covers [px, px+1) x [py, py+1); its centre is at
/// (px + 0.5, py + 0.5).
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;
  int width = 1, height = 1;
  std::array<double, 16> world_to_cam{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  Mat3 rotation() const;
  Vec3 translation() const;
  /// Camera centre in world coordinates.
  Vec3 center() const;
  Vec3 to_camera(const Vec3& world) const;

  /// Unit world-space direction through image point (u, v) in pixel units.
  Vec3 ray_dir(double u, double v) const;

  /// Throws ContractError unless the rotation is orthonormal within 1e-6,
  /// the last row is (0,0,0,1) and the image is at least 1x1.
  void validate() const;

  /// Camera at `eye` looking at `target`; `up` picks the image's upward direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg, int width,
                        int height);
};

/// Nine viewpoints on a sphere around `center`: three rings at different
/// elevations, azimuths interleaved. World up is +y.
std::vector<Camera> canonical_cameras(const Vec3& center, double radius, int width, int height,
                                      double fov_y_deg = 45.0);

/// Camera on the sphere at the given azimuth/elevation (degrees).
Camera orbit_camera(const Vec3& center, double radius, double azimuth_deg, double elevation_deg, int width,
                    int height, double fov_y_deg = 45.0);

/// {fx, fy, cx, cy, width, height, world_to_cam: 16 floats row-major}.
void to_json(nlohmann::json& j, const Camera& cam);
void from_json(const nlohmann::json& j, Camera& cam);

}  // namespace splatedit::splat
