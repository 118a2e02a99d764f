// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/raster/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splatedit/common/error.hpp"
#include "splatedit/splat/sh.hpp"

namespace splatedit::raster {

template <class T>
struct Rasterizer<T>::Cache {
  std::int64_t count = 0;
  int sh_degree = 0;
  std::vector<T> positions, log_scales, rotations, opacity_logits, sh;
  splat::Camera cam;
  int tiles_x = 0, tiles_y = 0, tile = 16;
  std::vector<std::vector<std::int32_t>> tile_lists;

  SplatView<T> view() const {
    return SplatView<T>{count, sh_degree, positions.data(), log_scales.data(), rotations.data(),
                        opacity_logits.data(), sh.data()};
  }
};

namespace {

using M3 = std::array<double, 9>;

template <class T>
struct CamT {
  T r[9];
  T t[3];
  T c[3];
  T fx, fy, cx, cy;
  int w, h;
};

template <class T>
CamT<T> cam_t(const splat::Camera& cam) {
  CamT<T> out{};
  const auto r = cam.rotation();
  const auto t = cam.translation();
  const auto c = cam.center();
  for (int i = 0; i < 9; ++i) out.r[i] = static_cast<T>(r[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 3; ++i) {
    out.t[i] = static_cast<T>(t[static_cast<std::size_t>(i)]);
    out.c[i] = static_cast<T>(c[static_cast<std::size_t>(i)]);
  }
  out.fx = static_cast<T>(cam.fx);
  out.fy = static_cast<T>(cam.fy);
  out.cx = static_cast<T>(cam.cx);
  out.cy = static_cast<T>(cam.cy);
  out.w = cam.width;
  out.h = cam.height;
  return out;
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// Rotation (row-major) from a normalised quaternion.
template <class T>
void rotmat(const T q[4], T r[9]) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  r[0] = 1 - 2 * (y * y + z * z);
  r[1] = 2 * (x * y - w * z);
  r[2] = 2 * (x * z + w * y);
  r[3] = 2 * (x * y + w * z);
  r[4] = 1 - 2 * (x * x + z * z);
  r[5] = 2 * (y * z - w * x);
  r[6] = 2 * (x * z - w * y);
  r[7] = 2 * (y * z + w * x);
  r[8] = 1 - 2 * (x * x + y * y);
}

// Intermediates shared by projection and its backward pass.
template <class T>
struct Geometry {
  T tc[3];        // camera-space centre
  T qn[4];        // normalised quaternion
  T qnorm;
  T s[3];         // scales
  T R[9];         // Gaussian rotation
  T L[9];         // R * diag(s)
  T Sigma[9];     // 3D covariance
  T M[6];         // J * W, 2x3
  T dir[3];       // unit view direction
  T dir_len;
};

template <class T>
bool finite_attrs(const SplatView<T>& v, std::int64_t i, int coeffs) {
  const auto u = static_cast<std::size_t>(i);
  for (std::size_t a = 0; a < 3; ++a) {
    if (!std::isfinite(v.positions[3 * u + a]) || !std::isfinite(v.log_scales[3 * u + a])) return false;
  }
  for (std::size_t a = 0; a < 4; ++a) {
    if (!std::isfinite(v.rotations[4 * u + a])) return false;
  }
  if (!std::isfinite(v.opacity_logits[u])) return false;
  const auto n = static_cast<std::size_t>(3 * coeffs);
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(v.sh[n * u + k])) return false;
  }
  return true;
}

template <class T>
Projected<T> project_impl(const SplatView<T>& v, std::int64_t i, const CamT<T>& cam, const RasterSettings& s,
                          Geometry<T>* geo_out) {
  Projected<T> p;
  Geometry<T> g{};
  const auto u = static_cast<std::size_t>(i);
  const T* pos = v.positions + 3 * u;
  for (int r = 0; r < 3; ++r) {
    g.tc[r] = cam.r[3 * r] * pos[0] + cam.r[3 * r + 1] * pos[1] + cam.r[3 * r + 2] * pos[2] + cam.t[r];
  }
  const T z = g.tc[2];
  if (!(z >= static_cast<T>(s.near_plane))) return p;
  const T mx = cam.fx * g.tc[0] / z + cam.cx;
  const T my = cam.fy * g.tc[1] / z + cam.cy;
  const T m = static_cast<T>(s.frustum_margin);
  if (mx - cam.cx < -m * cam.cx || mx - cam.cx > m * (static_cast<T>(cam.w) - cam.cx) || my - cam.cy < -m * cam.cy ||
      my - cam.cy > m * (static_cast<T>(cam.h) - cam.cy)) {
    return p;
  }

  const T* q = v.rotations + 4 * u;
  g.qnorm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(g.qnorm > T{0})) throw RenderError("zero quaternion", i);
  for (int a = 0; a < 4; ++a) g.qn[a] = q[a] / g.qnorm;
  rotmat(g.qn, g.R);
  for (int a = 0; a < 3; ++a) g.s[a] = std::exp(v.log_scales[3 * u + static_cast<std::size_t>(a)]);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) g.L[3 * r + c] = g.R[3 * r + c] * g.s[c];
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      g.Sigma[3 * r + c] = g.L[3 * r] * g.L[3 * c] + g.L[3 * r + 1] * g.L[3 * c + 1] + g.L[3 * r + 2] * g.L[3 * c + 2];
    }
  }
  const T J[6] = {cam.fx / z, T{0}, -cam.fx * g.tc[0] / (z * z), T{0}, cam.fy / z, -cam.fy * g.tc[1] / (z * z)};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      g.M[3 * r + c] = J[3 * r] * cam.r[c] + J[3 * r + 1] * cam.r[3 + c] + J[3 * r + 2] * cam.r[6 + c];
    }
  }
  T MS[6];
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      MS[3 * r + c] = g.M[3 * r] * g.Sigma[c] + g.M[3 * r + 1] * g.Sigma[3 + c] + g.M[3 * r + 2] * g.Sigma[6 + c];
    }
  }
  const T blur = static_cast<T>(s.blur);
  const T A = MS[0] * g.M[0] + MS[1] * g.M[1] + MS[2] * g.M[2] + blur;
  const T B = MS[0] * g.M[3] + MS[1] * g.M[4] + MS[2] * g.M[5];
  const T C = MS[3] * g.M[3] + MS[4] * g.M[4] + MS[5] * g.M[5] + blur;
  const T det = A * C - B * B;
  if (!(det > T{0})) return p;

  // View-dependent colour.
  for (int a = 0; a < 3; ++a) g.dir[a] = pos[a] - cam.c[a];
  g.dir_len = std::sqrt(g.dir[0] * g.dir[0] + g.dir[1] * g.dir[1] + g.dir[2] * g.dir[2]);
  for (int a = 0; a < 3; ++a) g.dir[a] /= g.dir_len;
  T basis[splat::sh_coeff_count(splat::kMaxShDegree)];
  splat::sh_basis(v.sh_degree, g.dir[0], g.dir[1], g.dir[2], basis);
  const int coeffs = splat::sh_coeff_count(v.sh_degree);
  const T* sh = v.sh + u * static_cast<std::size_t>(3 * coeffs);
  for (int ch = 0; ch < 3; ++ch) {
    T c = T{0.5};
    for (int k = 0; k < coeffs; ++k) c += basis[k] * sh[3 * k + ch];
    p.color_clamped[static_cast<std::size_t>(ch)] = c < T{0};
    p.color[static_cast<std::size_t>(ch)] = std::max(c, T{0});
  }

  p.opacity = sigmoid(v.opacity_logits[u]);
  const T amin = static_cast<T>(s.alpha_min);
  if (!(p.opacity >= amin)) return p;

  p.mean_x = mx;
  p.mean_y = my;
  p.depth = z;
  p.cov = {A, B, C};
  p.conic = {C / det, -B / det, A / det};
  const T mid = T{0.5} * (A + C);
  const T lmax = mid + std::sqrt(std::max(T{0}, T{0.25} * (A - C) * (A - C) + B * B));
  const T radius = std::sqrt(T{2} * std::log(p.opacity / amin) * lmax) + T{1};
  const auto lo = [](T c) { return static_cast<int>(std::ceil(c - T{0.5})); };
  const auto hi = [](T c) { return static_cast<int>(std::floor(c - T{0.5})); };
  const T bx0 = std::max(mx - radius, T{-1}), bx1 = std::min(mx + radius, static_cast<T>(cam.w + 1));
  const T by0 = std::max(my - radius, T{-1}), by1 = std::min(my + radius, static_cast<T>(cam.h + 1));
  p.x0 = std::max(0, lo(bx0));
  p.x1 = std::min(cam.w - 1, hi(bx1));
  p.y0 = std::max(0, lo(by0));
  p.y1 = std::min(cam.h - 1, hi(by1));
  p.visible = p.x0 <= p.x1 && p.y0 <= p.y1;
  if (geo_out != nullptr) *geo_out = g;
  return p;
}

// One splat's contribution at one pixel, as recorded during compositing.
template <class T>
struct Contribution {
  std::int32_t index;
  T alpha;
  T falloff;
  T transmittance;  // before this splat
  bool clamped;
  T dx, dy;
};

// Front-to-back compositing of one pixel. Calls `emit` for every accepted
// splat and returns the final transmittance.
template <class T, class Emit>
T composite_pixel(const std::vector<std::int32_t>& list, const std::vector<Projected<T>>& proj, int px, int py,
                  const RasterSettings& s, Emit&& emit) {
  const T cxp = static_cast<T>(px) + T{0.5};
  const T cyp = static_cast<T>(py) + T{0.5};
  const T amin = static_cast<T>(s.alpha_min), amax = static_cast<T>(s.alpha_max);
  const T tmin = static_cast<T>(s.transmittance_min);
  T trans = T{1};
  for (auto idx : list) {
    const auto& p = proj[static_cast<std::size_t>(idx)];
    if (px < p.x0 || px > p.x1 || py < p.y0 || py > p.y1) continue;
    const T dx = cxp - p.mean_x, dy = cyp - p.mean_y;
    const T power = T{-0.5} * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
    const T falloff = std::exp(power);
    const T raw = p.opacity * falloff;
    if (raw < amin) continue;
    const bool clamped = raw > amax;
    const T alpha = clamped ? amax : raw;
    const T next = trans * (T{1} - alpha);
    if (next < tmin) break;
    emit(Contribution<T>{idx, alpha, falloff, trans, clamped, dx, dy});
    trans = next;
  }
  return trans;
}

}  // namespace

SplatView<float> view_of(const splat::SplatScene& scene) {
  return SplatView<float>{scene.size(),         scene.sh_degree(),          scene.positions.data(),
                          scene.log_scales.data(), scene.rotations.data(), scene.opacity_logits.data(),
                          scene.sh.data()};
}

template <class T>
Projected<T> project(const SplatView<T>& splats, std::int64_t index, const splat::Camera& cam,
                     const RasterSettings& settings) {
  return project_impl<T>(splats, index, cam_t<T>(cam), settings, nullptr);
}

template <class T>
RenderOutput<T> Rasterizer<T>::forward(const SplatView<T>& splats, const splat::Camera& cam) {
  cam.validate();
  if (settings_.tile_size < 1) throw ContractError("tile size must be positive");
  const int coeffs = splat::sh_coeff_count(splats.sh_degree);
  for (std::int64_t i = 0; i < splats.count; ++i) {
    if (!finite_attrs(splats, i, coeffs)) throw RenderError("non-finite Gaussian attribute", i);
  }

  auto cache = std::make_shared<Cache>();
  cache->count = splats.count;
  cache->sh_degree = splats.sh_degree;
  const auto n = static_cast<std::size_t>(splats.count);
  cache->positions.assign(splats.positions, splats.positions + 3 * n);
  cache->log_scales.assign(splats.log_scales, splats.log_scales + 3 * n);
  cache->rotations.assign(splats.rotations, splats.rotations + 4 * n);
  cache->opacity_logits.assign(splats.opacity_logits, splats.opacity_logits + n);
  cache->sh.assign(splats.sh, splats.sh + n * static_cast<std::size_t>(3 * coeffs));
  cache->cam = cam;
  cache->tile = settings_.tile_size;
  cache->tiles_x = (cam.width + settings_.tile_size - 1) / settings_.tile_size;
  cache->tiles_y = (cam.height + settings_.tile_size - 1) / settings_.tile_size;

  const auto ct = cam_t<T>(cam);
  const auto view = cache->view();
  proj_.assign(n, Projected<T>{});
  std::vector<std::int32_t> order;
  for (std::int64_t i = 0; i < splats.count; ++i) {
    proj_[static_cast<std::size_t>(i)] = project_impl<T>(view, i, ct, settings_, nullptr);
    if (proj_[static_cast<std::size_t>(i)].visible) order.push_back(static_cast<std::int32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    const T da = proj_[static_cast<std::size_t>(a)].depth, db = proj_[static_cast<std::size_t>(b)].depth;
    return da < db || (da == db && a < b);
  });
  cache->tile_lists.assign(static_cast<std::size_t>(cache->tiles_x * cache->tiles_y), {});
  const int ts = settings_.tile_size;
  for (auto idx : order) {
    const auto& p = proj_[static_cast<std::size_t>(idx)];
    for (int ty = p.y0 / ts; ty <= p.y1 / ts; ++ty) {
      for (int tx = p.x0 / ts; tx <= p.x1 / ts; ++tx) {
        cache->tile_lists[static_cast<std::size_t>(ty * cache->tiles_x + tx)].push_back(idx);
      }
    }
  }

  RenderOutput<T> out;
  out.width = cam.width;
  out.height = cam.height;
  const auto npix = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  out.color.assign(3 * npix, T{0});
  out.alpha.assign(npix, T{0});
  out.depth.assign(npix, T{0});
  out.contrib_count.assign(npix, 0);
  const T bg[3] = {static_cast<T>(settings_.background[0]), static_cast<T>(settings_.background[1]),
                   static_cast<T>(settings_.background[2])};
  for (int ty = 0; ty < cache->tiles_y; ++ty) {
    for (int tx = 0; tx < cache->tiles_x; ++tx) {
      const auto& list = cache->tile_lists[static_cast<std::size_t>(ty * cache->tiles_x + tx)];
      for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
        for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
          T col[3] = {T{0}, T{0}, T{0}};
          T wsum{0}, dsum{0};
          std::int32_t cnt = 0;
          const T trans = composite_pixel(list, proj_, px, py, settings_, [&](const Contribution<T>& c) {
            const auto& p = proj_[static_cast<std::size_t>(c.index)];
            const T w = c.alpha * c.transmittance;
            for (int ch = 0; ch < 3; ++ch) col[ch] += w * p.color[static_cast<std::size_t>(ch)];
            wsum += w;
            dsum += w * p.depth;
            ++cnt;
          });
          const auto pix = static_cast<std::size_t>(py) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(px);
          for (int ch = 0; ch < 3; ++ch) out.color[3 * pix + static_cast<std::size_t>(ch)] = col[ch] + trans * bg[ch];
          out.alpha[pix] = T{1} - trans;
          out.depth[pix] = wsum > T{0} ? dsum / wsum : T{0};
          out.contrib_count[pix] = cnt;
        }
      }
    }
  }
  cache_ = std::move(cache);
  return out;
}

template <class T>
SplatGrads<T> Rasterizer<T>::backward(const std::vector<T>& grad_color) const {
  if (!cache_) throw ContractError("rasterize_backward called without a cached forward pass");
  const auto& cache = *cache_;
  const auto& cam = cache.cam;
  const auto npix = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  if (grad_color.size() != 3 * npix) throw ShapeError("grad_color must be H x W x 3");

  const auto n = static_cast<std::size_t>(cache.count);
  const int coeffs = splat::sh_coeff_count(cache.sh_degree);
  // Screen-space gradients: mean (2), conic (3), colour (3), opacity (1).
  std::vector<T> g_mean(2 * n, T{0}), g_conic(3 * n, T{0}), g_color(3 * n, T{0}), g_opacity(n, T{0});
  const T bg[3] = {static_cast<T>(settings_.background[0]), static_cast<T>(settings_.background[1]),
                   static_cast<T>(settings_.background[2])};
  const int ts = cache.tile;
  std::vector<Contribution<T>> contribs;
  for (int ty = 0; ty < cache.tiles_y; ++ty) {
    for (int tx = 0; tx < cache.tiles_x; ++tx) {
      const auto& list = cache.tile_lists[static_cast<std::size_t>(ty * cache.tiles_x + tx)];
      if (list.empty()) continue;
      for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
        for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
          const auto pix = static_cast<std::size_t>(py) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(px);
          const T dC[3] = {grad_color[3 * pix], grad_color[3 * pix + 1], grad_color[3 * pix + 2]};
          if (dC[0] == T{0} && dC[1] == T{0} && dC[2] == T{0}) continue;
          contribs.clear();
          composite_pixel(list, proj_, px, py, settings_, [&](const Contribution<T>& c) { contribs.push_back(c); });
          T accum[3] = {bg[0], bg[1], bg[2]};
          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const auto& c = *it;
            const auto gi = static_cast<std::size_t>(c.index);
            const auto& p = proj_[gi];
            const T w = c.alpha * c.transmittance;
            T dalpha{0};
            for (int ch = 0; ch < 3; ++ch) {
              const auto uch = static_cast<std::size_t>(ch);
              g_color[3 * gi + uch] += w * dC[ch];
              dalpha += (p.color[uch] - accum[ch]) * dC[ch];
              accum[ch] = c.alpha * p.color[uch] + (T{1} - c.alpha) * accum[ch];
            }
            dalpha *= c.transmittance;
            if (c.clamped) continue;
            g_opacity[gi] += c.falloff * dalpha;
            const T dpower = p.opacity * c.falloff * dalpha;
            const auto& q = p.conic;
            g_mean[2 * gi] += dpower * (q[0] * c.dx + q[1] * c.dy);
            g_mean[2 * gi + 1] += dpower * (q[1] * c.dx + q[2] * c.dy);
            g_conic[3 * gi] += T{-0.5} * c.dx * c.dx * dpower;
            g_conic[3 * gi + 1] += -c.dx * c.dy * dpower;
            g_conic[3 * gi + 2] += T{-0.5} * c.dy * c.dy * dpower;
          }
        }
      }
    }
  }

  SplatGrads<T> out;
  out.positions.assign(3 * n, T{0});
  out.log_scales.assign(3 * n, T{0});
  out.rotations.assign(4 * n, T{0});
  out.opacity_logits.assign(n, T{0});
  out.sh.assign(n * static_cast<std::size_t>(3 * coeffs), T{0});
  const auto ct = cam_t<T>(cam);
  const auto view = cache.view();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = proj_[i];
    if (!p.visible) continue;
    Geometry<T> g;
    project_impl(view, static_cast<std::int64_t>(i), ct, settings_, &g);

    // Opacity.
    out.opacity_logits[i] = g_opacity[i] * p.opacity * (T{1} - p.opacity);

    // Colour -> SH coefficients and view direction.
    T Y[splat::sh_coeff_count(splat::kMaxShDegree)];
    T dY[3 * splat::sh_coeff_count(splat::kMaxShDegree)];
    splat::sh_basis_with_grad(cache.sh_degree, g.dir[0], g.dir[1], g.dir[2], Y, dY);
    const T* sh = cache.sh.data() + i * static_cast<std::size_t>(3 * coeffs);
    T* gsh = out.sh.data() + i * static_cast<std::size_t>(3 * coeffs);
    T ddir[3] = {T{0}, T{0}, T{0}};
    for (int ch = 0; ch < 3; ++ch) {
      const auto uch = static_cast<std::size_t>(ch);
      const T dc = p.color_clamped[uch] ? T{0} : g_color[3 * i + uch];
      if (dc == T{0}) continue;
      for (int k = 0; k < coeffs; ++k) {
        gsh[3 * k + ch] += dc * Y[k];
        for (int a = 0; a < 3; ++a) ddir[a] += dc * sh[3 * k + ch] * dY[3 * k + a];
      }
    }
    T dpos[3];
    const T dd = ddir[0] * g.dir[0] + ddir[1] * g.dir[1] + ddir[2] * g.dir[2];
    for (int a = 0; a < 3; ++a) dpos[a] = (ddir[a] - g.dir[a] * dd) / g.dir_len;

    // Conic -> 2D covariance: dS2 = -Q * dQ * Q with symmetric dQ.
    const auto& q = p.conic;
    const T Q[4] = {q[0], q[1], q[1], q[2]};
    const T GQ[4] = {g_conic[3 * i], T{0.5} * g_conic[3 * i + 1], T{0.5} * g_conic[3 * i + 1], g_conic[3 * i + 2]};
    T tmp[4], GS2[4];
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) tmp[2 * r + c] = Q[2 * r] * GQ[c] + Q[2 * r + 1] * GQ[2 + c];
    }
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) GS2[2 * r + c] = -(tmp[2 * r] * Q[c] + tmp[2 * r + 1] * Q[2 + c]);
    }

    // S2 = M Sigma M^T: dSigma = M^T GS2 M, dM = 2 GS2 M Sigma.
    T GM[6];
    T GMS[6];  // GS2 * M
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) GMS[3 * r + c] = GS2[2 * r] * g.M[c] + GS2[2 * r + 1] * g.M[3 + c];
    }
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        GM[3 * r + c] = T{2} * (GMS[3 * r] * g.Sigma[c] + GMS[3 * r + 1] * g.Sigma[3 + c] + GMS[3 * r + 2] * g.Sigma[6 + c]);
      }
    }
    T GSig[9];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) GSig[3 * r + c] = g.M[r] * GMS[c] + g.M[3 + r] * GMS[3 + c];
    }

    // M = J W: dJ = dM W^T.
    T GJ[6];
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        GJ[3 * r + c] = GM[3 * r] * ct.r[3 * c] + GM[3 * r + 1] * ct.r[3 * c + 1] + GM[3 * r + 2] * ct.r[3 * c + 2];
      }
    }
    const T x = g.tc[0], y = g.tc[1], z = g.tc[2];
    const T z2 = z * z, z3 = z2 * z;
    T dt[3] = {T{0}, T{0}, T{0}};
    dt[0] += GJ[2] * (-ct.fx / z2);
    dt[1] += GJ[5] * (-ct.fy / z2);
    dt[2] += GJ[0] * (-ct.fx / z2) + GJ[2] * (T{2} * ct.fx * x / z3) + GJ[4] * (-ct.fy / z2) +
             GJ[5] * (T{2} * ct.fy * y / z3);
    const T gmx = g_mean[2 * i], gmy = g_mean[2 * i + 1];
    dt[0] += gmx * ct.fx / z;
    dt[1] += gmy * ct.fy / z;
    dt[2] += -gmx * ct.fx * x / z2 - gmy * ct.fy * y / z2;
    for (int a = 0; a < 3; ++a) {
      dpos[a] += ct.r[a] * dt[0] + ct.r[3 + a] * dt[1] + ct.r[6 + a] * dt[2];
      out.positions[3 * i + static_cast<std::size_t>(a)] = dpos[a];
    }

    // Sigma = L L^T with L = R diag(s).
    T GL[9];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        GL[3 * r + c] = T{2} * (GSig[3 * r] * g.L[c] + GSig[3 * r + 1] * g.L[3 + c] + GSig[3 * r + 2] * g.L[6 + c]);
      }
    }
    T GR[9];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) GR[3 * r + c] = GL[3 * r + c] * g.s[c];
    }
    for (int c = 0; c < 3; ++c) {
      const T ds = GL[c] * g.R[c] + GL[3 + c] * g.R[3 + c] + GL[6 + c] * g.R[6 + c];
      out.log_scales[3 * i + static_cast<std::size_t>(c)] = ds * g.s[c];
    }

    // Rotation matrix -> normalised quaternion -> raw quaternion.
    const T w = g.qn[0], qx = g.qn[1], qy = g.qn[2], qz = g.qn[3];
    T dq[4];
    dq[0] = T{2} * (-qz * GR[1] + qy * GR[2] + qz * GR[3] - qx * GR[5] - qy * GR[6] + qx * GR[7]);
    dq[1] = T{2} * (qy * GR[1] + qz * GR[2] + qy * GR[3] - T{2} * qx * GR[4] - w * GR[5] + qz * GR[6] + w * GR[7] -
                    T{2} * qx * GR[8]);
    dq[2] = T{2} * (-T{2} * qy * GR[0] + qx * GR[1] + w * GR[2] + qx * GR[3] + qz * GR[5] - w * GR[6] + qz * GR[7] -
                    T{2} * qy * GR[8]);
    dq[3] = T{2} * (-T{2} * qz * GR[0] - w * GR[1] + qx * GR[2] + w * GR[3] - T{2} * qz * GR[4] + qy * GR[5] +
                    qx * GR[6] + qy * GR[7]);
    const T proj_q = dq[0] * g.qn[0] + dq[1] * g.qn[1] + dq[2] * g.qn[2] + dq[3] * g.qn[3];
    for (int a = 0; a < 4; ++a) out.rotations[4 * i + static_cast<std::size_t>(a)] = (dq[a] - g.qn[a] * proj_q) / g.qnorm;
  }
  return out;
}

RenderOutput<float> rasterize(const splat::SplatScene& scene, const splat::Camera& cam, const RasterSettings& settings) {
  Rasterizer<float> r(settings);
  return r.forward(view_of(scene), cam);
}

std::vector<RenderOutput<float>> render_views(const splat::SplatScene& scene, const std::vector<splat::Camera>& cams,
                                              const RasterSettings& settings) {
  std::vector<RenderOutput<float>> out;
  out.reserve(cams.size());
  for (const auto& cam : cams) out.push_back(rasterize(scene, cam, settings));
  return out;
}

template <class T>
ad::Var<T> render_var(const SplatVars<T>& splats, const splat::Camera& cam, const RasterSettings& settings,
                      RenderOutput<T>* aux) {
  if (!splats.positions.valid()) throw ContractError("render_var: unbound splat variables");
  const auto n = splats.positions.rows();
  const int coeffs = splat::sh_coeff_count(splats.sh_degree);
  auto check = [n](const ad::Var<T>& v, std::int64_t cols, const char* name) {
    if (v.value().numel() != n * cols) {
      throw ShapeError(std::string("render_var: ") + name + " has shape " + ad::shape_str(v.value().shape()));
    }
  };
  check(splats.positions, 3, "positions");
  check(splats.log_scales, 3, "log_scales");
  check(splats.rotations, 4, "rotations");
  check(splats.opacity_logits, 1, "opacity_logits");
  check(splats.sh, 3 * coeffs, "sh");
  SplatView<T> view{n,
                    splats.sh_degree,
                    splats.positions.value().ptr(),
                    splats.log_scales.value().ptr(),
                    splats.rotations.value().ptr(),
                    splats.opacity_logits.value().ptr(),
                    splats.sh.value().ptr()};
  auto rast = std::make_shared<Rasterizer<T>>(settings);
  auto out = rast->forward(view, cam);
  ad::Tensor<T> img(ad::Shape{cam.height, cam.width, 3}, out.color);
  if (aux != nullptr) *aux = std::move(out);
  auto& tape = *splats.positions.tape();
  const SplatVars<T> sv = splats;
  return tape.record(std::move(img), {sv.positions, sv.log_scales, sv.rotations, sv.opacity_logits, sv.sh},
                     [sv, rast](ad::Tape<T>& t, const ad::Tensor<T>& g) {
                       auto grads = rast->backward(g.storage());
                       auto acc = [&t](const ad::Var<T>& v, std::vector<T>& data) {
                         if (!t.requires_grad(v)) return;
                         t.accumulate(v, ad::Tensor<T>(v.value().shape(), std::move(data)));
                       };
                       acc(sv.positions, grads.positions);
                       acc(sv.log_scales, grads.log_scales);
                       acc(sv.rotations, grads.rotations);
                       acc(sv.opacity_logits, grads.opacity_logits);
                       acc(sv.sh, grads.sh);
                     });
}

template class Rasterizer<float>;
template class Rasterizer<double>;
template Projected<float> project(const SplatView<float>&, std::int64_t, const splat::Camera&, const RasterSettings&);
template Projected<double> project(const SplatView<double>&, std::int64_t, const splat::Camera&, const RasterSettings&);
template ad::Var<float> render_var(const SplatVars<float>&, const splat::Camera&, const RasterSettings&,
                                   RenderOutput<float>*);
template ad::Var<double> render_var(const SplatVars<double>&, const splat::Camera&, const RasterSettings&,
                                    RenderOutput<double>*);

SplatVars<float> to_vars(ad::TapeF& tape, const splat::SplatScene& scene, bool requires_grad) {
  const std::int64_t n = scene.size();
  SplatVars<float> v;
  v.sh_degree = scene.sh_degree();
  v.positions = tape.leaf(ad::TensorF(ad::Shape{n, 3}, scene.positions), requires_grad);
  v.log_scales = tape.leaf(ad::TensorF(ad::Shape{n, 3}, scene.log_scales), requires_grad);
  v.rotations = tape.leaf(ad::TensorF(ad::Shape{n, 4}, scene.rotations), requires_grad);
  v.opacity_logits = tape.leaf(ad::TensorF(ad::Shape{n, 1}, scene.opacity_logits), requires_grad);
  v.sh = tape.leaf(ad::TensorF(ad::Shape{n, 3LL * scene.coeffs()}, scene.sh), requires_grad);
  return v;
}

splat::SplatScene to_scene(const SplatVars<float>& vars) {
  splat::SplatScene s(vars.sh_degree);
  s.positions = vars.positions.value().storage();
  s.log_scales = vars.log_scales.value().storage();
  s.rotations = vars.rotations.value().storage();
  s.opacity_logits = vars.opacity_logits.value().storage();
  s.sh = vars.sh.value().storage();
  if (static_cast<std::int64_t>(s.sh.size()) != s.size() * 3 * s.coeffs()) {
    throw ContractError("SH block does not match degree " + std::to_string(vars.sh_degree));
  }
  return s;
}

}  // namespace splatedit::raster
