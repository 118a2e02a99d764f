// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "splatedit/ad/tape.hpp"
#include "splatedit/splat/camera.hpp"
#include "splatedit/splat/scene.hpp"

namespace splatedit::raster {

struct RasterSettings {
  std::array<double, 3> background{0.0, 0.0, 0.0};
  int tile_size = 16;
  double near_plane = 0.2;
  /// Added to both diagonal entries of every projected covariance (px^2).
  double blur = 0.3;
  /// A Gaussian touches a pixel only when opacity * falloff >= alpha_min.
  double alpha_min = 1.0 / 255.0;
  double alpha_max = 0.999;
  /// Compositing stops before a splat that would push transmittance below this.
  double transmittance_min = 1e-4;
  /// Centres outside the view frustum scaled by this factor are culled.
  double frustum_margin = 1.3;
};

/// Non-owning view of Gaussian attributes in stored form (see SplatScene).
template <class T>
struct SplatView {
  std::int64_t count = 0;
  int sh_degree = 0;
  const T* positions = nullptr;
  const T* log_scales = nullptr;
  const T* rotations = nullptr;
  const T* opacity_logits = nullptr;
  const T* sh = nullptr;
};

SplatView<float> view_of(const splat::SplatScene& scene);

template <class T>
struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<T> color;  // H x W x 3
  std::vector<T> alpha;  // H x W
  /// Alpha-weighted mean camera depth of contributing splats; 0 where none.
  std::vector<T> depth;
  std::vector<std::int32_t> contrib_count;
};

template <class T>
struct SplatGrads {
  std::vector<T> positions, log_scales, rotations, opacity_logits, sh;
};

/// Screen-space state of one Gaussian for one camera.
template <class T>
struct Projected {
  bool visible = false;
  T mean_x{}, mean_y{};
  std::array<T, 3> cov{};    // (A, B, C) of [[A, B], [B, C]], blur included
  std::array<T, 3> conic{};  // inverse of cov in the same packing
  T depth{};
  std::array<T, 3> color{};
  std::array<bool, 3> color_clamped{};
  T opacity{};
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds of the support
};

/// Tile-based splat rasterizer with an analytic backward pass.
///
/// Each pixel composites, front to back in (camera z, index) order, exactly
/// the Gaussians whose alpha there reaches alpha_min; tile bounds are
/// conservative, so the image does not depend on the tile size.
template <class T>
class Rasterizer {
 public:
  explicit Rasterizer(RasterSettings settings = {}) : settings_(settings) {}

  /// Throws RenderError naming the first Gaussian with a non-finite attribute.
  RenderOutput<T> forward(const SplatView<T>& splats, const splat::Camera& cam);

  /// Gradients of <grad_color, color> for the last forward call. Sorting is
  /// treated as constant. ContractError if forward has not run.
  SplatGrads<T> backward(const std::vector<T>& grad_color) const;

  const std::vector<Projected<T>>& projected() const { return proj_; }
  const RasterSettings& settings() const { return settings_; }

 private:
  struct Cache;
  RasterSettings settings_;
  std::vector<Projected<T>> proj_;
  std::shared_ptr<const Cache> cache_;
};

/// Projection of a single Gaussian (culled Gaussians have visible == false).
template <class T>
Projected<T> project(const SplatView<T>& splats, std::int64_t index, const splat::Camera& cam,
                     const RasterSettings& settings = {});

RenderOutput<float> rasterize(const splat::SplatScene& scene, const splat::Camera& cam,
                              const RasterSettings& settings = {});

std::vector<RenderOutput<float>> render_views(const splat::SplatScene& scene, const std::vector<splat::Camera>& cams,
                                              const RasterSettings& settings = {});

/// Differentiable splat attributes on a tape. Shapes: positions [N x 3],
/// log_scales [N x 3], rotations [N x 4], opacity_logits [N x 1],
/// sh [N x 3C] (coefficient-major, channel-minor).
template <class T>
struct SplatVars {
  ad::Var<T> positions, log_scales, rotations, opacity_logits, sh;
  int sh_degree = 0;
};

/// Scene attributes as tape leaves.
SplatVars<float> to_vars(ad::TapeF& tape, const splat::SplatScene& scene, bool requires_grad = false);
/// Current values of `vars` as a scene.
splat::SplatScene to_scene(const SplatVars<float>& vars);

/// Renders the colour image [H x W x 3] as a tape node. `aux`, when given,
/// receives the full render output (alpha, depth, counts).
template <class T>
ad::Var<T> render_var(const SplatVars<T>& splats, const splat::Camera& cam, const RasterSettings& settings = {},
                      RenderOutput<T>* aux = nullptr);

}  // namespace splatedit::raster
