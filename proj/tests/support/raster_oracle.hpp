// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "splatedit/common/rng.hpp"
#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/splat/camera.hpp"
#include "splatedit/splat/sh.hpp"

namespace splatedit::testing {

/// Gaussian attributes in double precision, stored form.
struct SceneD {
  int sh_degree = 0;
  std::vector<double> positions, log_scales, rotations, opacity_logits, sh;

  std::int64_t size() const { return static_cast<std::int64_t>(opacity_logits.size()); }
  raster::SplatView<double> view() const {
    return {size(), sh_degree, positions.data(), log_scales.data(), rotations.data(), opacity_logits.data(), sh.data()};
  }
  std::vector<double>* attribute(int k) {
    std::vector<double>* all[5] = {&positions, &log_scales, &rotations, &opacity_logits, &sh};
    return all[k];
  }
};

inline const char* attribute_name(int k) {
  static const char* names[5] = {"position", "log_scale", "rotation", "opacity", "sh"};
  return names[k];
}

/// n Gaussians in a ball of radius `spread` around the origin, sized to cover
/// a few pixels in a 32x32 view from distance 3.
inline SceneD random_scene_d(int n, int degree, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  SceneD s;
  s.sh_degree = degree;
  const int coeffs = splat::sh_coeff_count(degree);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) s.positions.push_back(rng.uniform(-spread, spread));
    for (int a = 0; a < 3; ++a) s.log_scales.push_back(rng.uniform(-2.6, -1.6));
    double q[4], qn = 0;
    for (double& c : q) {
      c = rng.normal();
      qn += c * c;
    }
    for (double c : q) s.rotations.push_back(c / std::sqrt(qn) * rng.uniform(0.8, 1.2));
    s.opacity_logits.push_back(rng.uniform(-1.0, 1.5));
    for (int k = 0; k < coeffs; ++k) {
      for (int ch = 0; ch < 3; ++ch) s.sh.push_back(k == 0 ? rng.uniform(-1.2, 1.2) : rng.normal(0, 0.25));
    }
  }
  return s;
}

/// Per-pixel compositing over every projected Gaussian, fully re-sorted at each
/// pixel and with no tile or bounding-box culling.
inline raster::RenderOutput<double> brute_force_render(const SceneD& scene, const splat::Camera& cam,
                                                       const raster::RasterSettings& s = {}) {
  const auto view = scene.view();
  std::vector<raster::Projected<double>> proj;
  for (std::int64_t i = 0; i < scene.size(); ++i) proj.push_back(raster::project(view, i, cam, s));
  raster::RenderOutput<double> out;
  out.width = cam.width;
  out.height = cam.height;
  const auto npix = static_cast<std::size_t>(cam.width * cam.height);
  out.color.assign(3 * npix, 0.0);
  out.alpha.assign(npix, 0.0);
  out.depth.assign(npix, 0.0);
  out.contrib_count.assign(npix, 0);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      std::vector<std::size_t> order;
      for (std::size_t i = 0; i < proj.size(); ++i) {
        if (proj[i].visible) order.push_back(i);
      }
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proj[a].depth < proj[b].depth || (proj[a].depth == proj[b].depth && a < b);
      });
      double T = 1.0, col[3] = {0, 0, 0}, wsum = 0, dsum = 0;
      int cnt = 0;
      for (auto i : order) {
        const auto& p = proj[i];
        const double dx = px + 0.5 - p.mean_x, dy = py + 0.5 - p.mean_y;
        const double g = std::exp(-0.5 * (p.conic[0] * dx * dx + 2 * p.conic[1] * dx * dy + p.conic[2] * dy * dy));
        const double raw = p.opacity * g;
        if (raw < s.alpha_min) continue;
        const double a = std::min(raw, s.alpha_max);
        if (T * (1 - a) < s.transmittance_min) break;
        for (int c = 0; c < 3; ++c) col[c] += a * T * p.color[static_cast<std::size_t>(c)];
        wsum += a * T;
        dsum += a * T * p.depth;
        T *= 1 - a;
        ++cnt;
      }
      const auto k = static_cast<std::size_t>(py * cam.width + px);
      for (int c = 0; c < 3; ++c) out.color[3 * k + static_cast<std::size_t>(c)] = col[c] + T * s.background[static_cast<std::size_t>(c)];
      out.alpha[k] = 1 - T;
      out.depth[k] = wsum > 0 ? dsum / wsum : 0.0;
      out.contrib_count[k] = cnt;
    }
  }
  return out;
}

struct RasterGradReport {
  double rel_err[5] = {0, 0, 0, 0, 0};  // per attribute class
  double analytic_norm[5] = {0, 0, 0, 0, 0};
};

/// Compares the analytic backward of L = <w, color> against central
/// differences over every scalar attribute.
inline RasterGradReport raster_grad_check(SceneD scene, const splat::Camera& cam, std::uint64_t seed,
                                          double h = 1e-6, const raster::RasterSettings& settings = {}) {
  Rng rng(seed);
  const auto npix = static_cast<std::size_t>(cam.width * cam.height);
  std::vector<double> w(3 * npix);
  for (auto& v : w) v = rng.uniform(-1, 1);
  auto loss = [&](const SceneD& s) {
    raster::Rasterizer<double> r(settings);
    const auto out = r.forward(s.view(), cam);
    return std::inner_product(out.color.begin(), out.color.end(), w.begin(), 0.0);
  };
  raster::Rasterizer<double> r(settings);
  r.forward(scene.view(), cam);
  const auto grads = r.backward(w);
  const std::vector<double>* analytic[5] = {&grads.positions, &grads.log_scales, &grads.rotations,
                                            &grads.opacity_logits, &grads.sh};
  RasterGradReport rep;
  for (int k = 0; k < 5; ++k) {
    auto& attr = *scene.attribute(k);
    double diff2 = 0, an2 = 0, nu2 = 0;
    for (std::size_t j = 0; j < attr.size(); ++j) {
      const double keep = attr[j];
      attr[j] = keep + h;
      const double lp = loss(scene);
      attr[j] = keep - h;
      const double lm = loss(scene);
      attr[j] = keep;
      const double num = (lp - lm) / (2 * h);
      const double an = (*analytic[k])[j];
      diff2 += (an - num) * (an - num);
      an2 += an * an;
      nu2 += num * num;
    }
    rep.rel_err[k] = std::sqrt(diff2) / std::max({std::sqrt(an2), std::sqrt(nu2), 1e-10});
    rep.analytic_norm[k] = std::sqrt(an2);
  }
  return rep;
}

/// 32x32 view of the origin from distance 3.
inline splat::Camera small_camera(double azimuth = 20, double elevation = 15, int size = 32) {
  return splat::orbit_camera({0, 0, 0}, 3.0, azimuth, elevation, size, size);
}

}  // namespace splatedit::testing
