// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "splatedit/common/image.hpp"
#include "splatedit/common/rng.hpp"
#include "splatedit/splat/camera.hpp"
#include "splatedit/splat/scene.hpp"
#include "splatedit/ttt/session.hpp"
#include "splatedit/voxel/grid.hpp"

// Synthetic edit tasks with exactly known targets: a global recolor (hue
// rotation with directional shading) and local graffiti strokes.
namespace splatedit::train {

using Mat3d = std::array<std::array<double, 3>, 3>;

struct RecolorParams {
  double hue_deg = 90.0;
  Vec3 light_dir{0.0, 1.0, 0.0};  // unit
  double ambient = 0.5;           // shade = ambient + (1 - ambient) |n . l|
};

/// Hue in [60, 180] degrees with random sign, light on the unit sphere,
/// ambient in [0.35, 0.6].
RecolorParams random_recolor(Rng& rng);

/// Rotation by `deg` about the grey axis (1,1,1)/sqrt(3).
Mat3d hue_matrix(double deg);

/// shade * H (rgb). Image-space previews use shade = 1.
std::array<double, 3> recolor_rgb(const std::array<double, 3>& rgb, const RecolorParams& p, double shade = 1.0);
io::Image recolor_image(const io::Image& img, const RecolorParams& p);

/// Shade factor of a Gaussian: its normal is the axis of smallest scale.
double gaussian_shade(const splat::SplatScene& scene, std::int64_t i, const RecolorParams& p);
/// Applies recolor_rgb per Gaussian to every SH band, so rendered colours
/// (before clamping) are recoloured exactly from every viewpoint.
splat::SplatScene recolor_scene(const splat::SplatScene& scene, const RecolorParams& p);

/// Cubic Bezier in pixel coordinates, painted with a round brush.
struct Stroke {
  std::array<std::array<double, 2>, 4> control{};
  double radius = 1.5;
  std::array<double, 3> color{1.0, 1.0, 1.0};
};

std::vector<Stroke> random_strokes(Rng& rng, int width, int height, int count);
voxel::PixelMask stroke_mask(const std::vector<Stroke>& strokes, int width, int height);
/// Colour of the last stroke covering each pixel (the mask says where).
io::Image stroke_layer(const std::vector<Stroke>& strokes, int width, int height);

/// Paints the Gaussians visible under the strokes from `cam`: a Gaussian is
/// painted when its centre projects into a stroke pixel and lies within
/// `depth_tol` of the rendered depth there. Painted Gaussians take the
/// stroke colour with no view dependence.
splat::SplatScene paint_scene(const splat::SplatScene& scene, const splat::Camera& cam,
                              const std::vector<Stroke>& strokes, double depth_tol = 0.08);

/// One training or evaluation item. Edit images and targets are renders of
/// the edited ground-truth scene.
struct EditTaskSample {
  ttt::EditMode mode = ttt::EditMode::kGlobal;
  splat::SplatScene edited;
  std::vector<ttt::EditView> edits;
  std::vector<splat::Camera> targets;
  std::vector<io::Image> target_images;
};

struct TaskConfig {
  int image_size = 32;
  double camera_radius = 3.0;
  double fov_y_deg = 45.0;
  /// Local edits are made from closer "zoom" viewpoints.
  double zoom_radius = 2.2;
};

/// Orbit camera with random azimuth and elevation in [-15, 45] degrees.
splat::Camera random_orbit(Rng& rng, const TaskConfig& cfg, double radius);

/// Global recolor: `views` random edit cameras, `targets` random novel cameras.
EditTaskSample make_recolor_sample(const splat::SplatScene& base, int views, int targets, Rng& rng,
                                   const TaskConfig& cfg = {});
/// Local graffiti: each edit view is a zoom camera with 1-2 strokes; two
/// novel targets are sampled around every edit view.
EditTaskSample make_graffiti_sample(const splat::SplatScene& base, int views, Rng& rng, const TaskConfig& cfg = {});

/// Cameras near `cam`: azimuth +-15 degrees about the object centre, same radius.
std::vector<splat::Camera> cameras_around(const splat::Camera& cam, int count);

io::Image to_image(const std::vector<float>& hw3, int width, int height);

}  // namespace splatedit::train
