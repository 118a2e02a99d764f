// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/train/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splatedit/common/error.hpp"
#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/splat/synth.hpp"

namespace splatedit::train {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::array<double, 3> mat_vec(const Mat3d& m, const std::array<double, 3>& v) {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r)] += m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(c)];
  }
  return out;
}

double fov_of(const splat::Camera& cam) { return 2.0 * std::atan(0.5 * cam.height / cam.fy) / kDeg; }

}  // namespace

RecolorParams random_recolor(Rng& rng) {
  RecolorParams p;
  p.hue_deg = rng.uniform(60.0, 180.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  Vec3 l{rng.normal(), rng.normal(), rng.normal()};
  while (norm(l) < 1e-6) l = {rng.normal(), rng.normal(), rng.normal()};
  p.light_dir = normalized(l);
  p.ambient = rng.uniform(0.35, 0.6);
  return p;
}

Mat3d hue_matrix(double deg) {
  // Rodrigues rotation about the unit grey axis.
  const double t = deg * kDeg;
  const double c = std::cos(t), s = std::sin(t);
  const double k = 1.0 / std::sqrt(3.0);
  const double a = c + (1 - c) / 3.0;
  const double b = (1 - c) / 3.0 - k * s;
  const double d = (1 - c) / 3.0 + k * s;
  return {{{a, b, d}, {d, a, b}, {b, d, a}}};
}

std::array<double, 3> recolor_rgb(const std::array<double, 3>& rgb, const RecolorParams& p, double shade) {
  auto out = mat_vec(hue_matrix(p.hue_deg), rgb);
  for (auto& v : out) v *= shade;
  return out;
}

io::Image recolor_image(const io::Image& img, const RecolorParams& p) {
  if (img.channels != 3) throw ContractError("recolor_image expects RGB");
  io::Image out = img;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = recolor_rgb({img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]}, p);
    for (std::size_t ch = 0; ch < 3; ++ch) out.data[3 * i + ch] = static_cast<float>(std::clamp(c[ch], 0.0, 1.0));
  }
  return out;
}

double gaussian_shade(const splat::SplatScene& scene, std::int64_t i, const RecolorParams& p) {
  const auto g = scene.gaussian(i);
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (g.log_scale[static_cast<std::size_t>(a)] < g.log_scale[static_cast<std::size_t>(axis)]) axis = a;
  }
  const auto r = splat::quat_to_rotmat({g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]});
  const Vec3 n{r[static_cast<std::size_t>(axis)], r[static_cast<std::size_t>(3 + axis)], r[static_cast<std::size_t>(6 + axis)]};
  return p.ambient + (1.0 - p.ambient) * std::abs(dot(n, p.light_dir));
}

splat::SplatScene recolor_scene(const splat::SplatScene& scene, const RecolorParams& p) {
  splat::SplatScene out = scene;
  const auto m = hue_matrix(p.hue_deg);
  const int coeffs = scene.coeffs();
  for (std::int64_t i = 0; i < scene.size(); ++i) {
    const double s = gaussian_shade(scene, i, p);
    for (int k = 0; k < coeffs; ++k) {
      float* c = out.sh.data() + (i * coeffs + k) * 3;
      auto v = mat_vec(m, {c[0], c[1], c[2]});
      for (std::size_t ch = 0; ch < 3; ++ch) {
        // The 0.5 colour offset is grey, so only the shade touches it.
        const double offset = k == 0 ? (s - 1.0) * 0.5 / splat::sh_const::C0 : 0.0;
        c[ch] = static_cast<float>(s * v[ch] + offset);
      }
    }
  }
  return out;
}

std::vector<Stroke> random_strokes(Rng& rng, int width, int height, int count) {
  std::vector<Stroke> out;
  for (int s = 0; s < count; ++s) {
    Stroke st;
    const double cx = rng.uniform(0.3, 0.7) * width, cy = rng.uniform(0.3, 0.7) * height;
    const double span = 0.35 * std::min(width, height);
    for (auto& c : st.control) c = {cx + rng.uniform(-span, span), cy + rng.uniform(-span, span)};
    st.radius = rng.uniform(1.0, 2.2) * width / 32.0;
    st.color = {rng.uniform(), rng.uniform(), rng.uniform()};
    out.push_back(st);
  }
  return out;
}

namespace {

template <class F>
void rasterize_strokes(const std::vector<Stroke>& strokes, int width, int height, F&& paint) {
  for (std::size_t s = 0; s < strokes.size(); ++s) {
    const auto& st = strokes[s];
    constexpr int kSamples = 64;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        for (int i = 0; i <= kSamples; ++i) {
          const double t = static_cast<double>(i) / kSamples, u = 1 - t;
          const double w0 = u * u * u, w1 = 3 * u * u * t, w2 = 3 * u * t * t, w3 = t * t * t;
          const double bx = w0 * st.control[0][0] + w1 * st.control[1][0] + w2 * st.control[2][0] + w3 * st.control[3][0];
          const double by = w0 * st.control[0][1] + w1 * st.control[1][1] + w2 * st.control[2][1] + w3 * st.control[3][1];
          if ((bx - px) * (bx - px) + (by - py) * (by - py) <= st.radius * st.radius) {
            paint(x, y, s);
            break;
          }
        }
      }
    }
  }
}

}  // namespace

voxel::PixelMask stroke_mask(const std::vector<Stroke>& strokes, int width, int height) {
  voxel::PixelMask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  rasterize_strokes(strokes, width, height,
                    [&](int x, int y, std::size_t) { m.data[static_cast<std::size_t>(y) * width + x] = 1; });
  return m;
}

io::Image stroke_layer(const std::vector<Stroke>& strokes, int width, int height) {
  io::Image img(width, height, 3);
  rasterize_strokes(strokes, width, height, [&](int x, int y, std::size_t s) {
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(strokes[s].color[static_cast<std::size_t>(c)]);
  });
  return img;
}

splat::SplatScene paint_scene(const splat::SplatScene& scene, const splat::Camera& cam,
                              const std::vector<Stroke>& strokes, double depth_tol) {
  const auto mask = stroke_mask(strokes, cam.width, cam.height);
  const auto layer = stroke_layer(strokes, cam.width, cam.height);
  const auto render = raster::rasterize(scene, cam);
  splat::SplatScene out = scene;
  const int coeffs = scene.coeffs();
  for (std::int64_t i = 0; i < scene.size(); ++i) {
    const Vec3 p = cam.to_camera(scene.position(i));
    if (p[2] <= 0.2) continue;
    const int x = static_cast<int>(std::floor(cam.fx * p[0] / p[2] + cam.cx));
    const int y = static_cast<int>(std::floor(cam.fy * p[1] / p[2] + cam.cy));
    if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
    const auto pix = static_cast<std::size_t>(y) * cam.width + x;
    if (mask.data[pix] == 0 || render.alpha[pix] < 0.5f) continue;
    const double depth = render.depth[pix];
    if (p[2] > depth + depth_tol) continue;
    float* c = out.sh.data() + i * coeffs * 3;
    for (int ch = 0; ch < 3; ++ch) c[ch] = static_cast<float>(splat::rgb_to_dc(layer.at(x, y, ch)));
    std::fill(c + 3, c + coeffs * 3, 0.f);
  }
  return out;
}

splat::Camera random_orbit(Rng& rng, const TaskConfig& cfg, double radius) {
  return splat::orbit_camera({0, 0, 0}, radius, rng.uniform(0.0, 360.0), rng.uniform(-15.0, 45.0), cfg.image_size,
                             cfg.image_size, cfg.fov_y_deg);
}

std::vector<splat::Camera> cameras_around(const splat::Camera& cam, int count) {
  const Vec3 eye = cam.center();
  const double r = norm(eye);
  const double el = std::asin(std::clamp(eye[1] / r, -1.0, 1.0)) / kDeg;
  const double az = std::atan2(eye[0], eye[2]) / kDeg;
  std::vector<splat::Camera> out;
  for (int i = 0; i < count; ++i) {
    const double offset = (i % 2 == 0 ? 15.0 : -15.0) * (1 + i / 2);
    out.push_back(splat::orbit_camera({0, 0, 0}, r, az + offset, el, cam.width, cam.height, fov_of(cam)));
  }
  return out;
}

io::Image to_image(const std::vector<float>& hw3, int width, int height) {
  io::Image img(width, height, 3);
  if (hw3.size() != img.data.size()) throw ShapeError("image buffer size mismatch");
  for (std::size_t i = 0; i < hw3.size(); ++i) img.data[i] = std::clamp(hw3[i], 0.f, 1.f);
  return img;
}

EditTaskSample make_recolor_sample(const splat::SplatScene& base, int views, int targets, Rng& rng,
                                   const TaskConfig& cfg) {
  EditTaskSample s;
  s.mode = ttt::EditMode::kGlobal;
  s.edited = recolor_scene(base, random_recolor(rng));
  for (int v = 0; v < views; ++v) {
    ttt::EditView e;
    e.view.camera = random_orbit(rng, cfg, cfg.camera_radius);
    e.view.image = to_image(raster::rasterize(s.edited, e.view.camera).color, cfg.image_size, cfg.image_size);
    s.edits.push_back(std::move(e));
  }
  for (int t = 0; t < targets; ++t) s.targets.push_back(random_orbit(rng, cfg, cfg.camera_radius));
  for (const auto& r : raster::render_views(s.edited, s.targets)) {
    s.target_images.push_back(to_image(r.color, cfg.image_size, cfg.image_size));
  }
  return s;
}

EditTaskSample make_graffiti_sample(const splat::SplatScene& base, int views, Rng& rng, const TaskConfig& cfg) {
  EditTaskSample s;
  s.mode = ttt::EditMode::kLocal;
  s.edited = base;
  std::vector<splat::Camera> cams;
  std::vector<std::vector<Stroke>> strokes;
  for (int v = 0; v < views; ++v) {
    cams.push_back(random_orbit(rng, cfg, cfg.zoom_radius));
    strokes.push_back(random_strokes(rng, cfg.image_size, cfg.image_size, 1 + static_cast<int>(rng.below(2))));
    s.edited = paint_scene(s.edited, cams.back(), strokes.back());
  }
  for (int v = 0; v < views; ++v) {
    ttt::EditView e;
    e.view.camera = cams[static_cast<std::size_t>(v)];
    e.view.image = to_image(raster::rasterize(s.edited, e.view.camera).color, cfg.image_size, cfg.image_size);
    e.mask = stroke_mask(strokes[static_cast<std::size_t>(v)], cfg.image_size, cfg.image_size);
    s.edits.push_back(std::move(e));
    for (const auto& c : cameras_around(cams[static_cast<std::size_t>(v)], 2)) s.targets.push_back(c);
  }
  for (const auto& r : raster::render_views(s.edited, s.targets)) {
    s.target_images.push_back(to_image(r.color, cfg.image_size, cfg.image_size));
  }
  return s;
}

}  // namespace splatedit::train
