// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/lrm/feature_lrm.hpp"

#include <cmath>

#include "splatedit/common/error.hpp"
#include "splatedit/splat/synth.hpp"

namespace splatedit::lrm {

int LrmConfig::attributes() const { return 9 + 3 * splat::sh_coeff_count(sh_degree); }

ad::TensorF FeatureGaussians::features() const {
  const std::int64_t d = tokens.dim(1);
  ad::TensorF out(ad::Shape{size(), d});
  for (std::int64_t i = 0; i < size(); ++i) {
    const float* src = tokens.ptr() + token_of[static_cast<std::size_t>(i)] * d;
    std::copy(src, src + d, out.ptr() + i * d);
  }
  return out;
}

FeatureGaussians FeatureGaussians::pruned(double threshold) const {
  std::vector<std::int64_t> keep;
  for (std::int64_t i = 0; i < size(); ++i) {
    if (gaussians.opacity(i) >= threshold) keep.push_back(i);
  }
  FeatureGaussians out;
  out.gaussians = gaussians.subset(keep);
  out.tokens = tokens;
  for (auto i : keep) {
    out.token_of.push_back(token_of[static_cast<std::size_t>(i)]);
    out.pixel_of.push_back(pixel_of[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::array<double, 6> ray_code(const splat::Camera& cam, double u, double v) {
  const Vec3 d = cam.ray_dir(u, v);
  const Vec3 m = cross(cam.center(), d);
  return {d[0], d[1], d[2], m[0], m[1], m[2]};
}

FeatureLrm::FeatureLrm(const LrmConfig& cfg, nn::ParamStore& store, Rng& rng) : cfg_(cfg) {
  if (cfg.patch <= 0 || cfg.image_size % cfg.patch != 0) {
    throw ContractError("image size " + std::to_string(cfg.image_size) + " not divisible by patch " +
                        std::to_string(cfg.patch));
  }
  const std::int64_t d = cfg.dim;
  patch_embed_ = nn::Linear::make(store, "lrm.patch", 3LL * cfg.patch * cfg.patch, d, rng);
  pos_embed_ = &store.create("lrm.pos", ad::Shape{cfg.tokens_per_view(), d}, nn::Init::normal(0.02), rng);
  token_proj_ = nn::Linear::make(store, "lrm.proj", 2 * d + 6, d, rng);
  const double residual_gain = 1.0 / std::sqrt(2.0 * cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    blocks_.push_back(nn::SelfAttentionBlock::make(store, "lrm.block" + std::to_string(l), d, cfg.mlp_hidden,
                                                   cfg.heads, rng, residual_gain));
  }
  final_norm_ = nn::LayerNorm::make(store, "lrm.norm", d, rng);
  head_ = nn::Linear::make(store, "lrm.head", d, static_cast<std::int64_t>(cfg.patch) * cfg.patch * cfg.attributes(),
                           rng, true, 0.1);
}

void FeatureLrm::check_views(const std::vector<View>& views) const {
  if (views.empty()) throw ContractError("no input views");
  for (const auto& v : views) {
    if (v.image.width % cfg_.patch != 0 || v.image.height % cfg_.patch != 0) {
      throw ContractError("image " + std::to_string(v.image.width) + "x" + std::to_string(v.image.height) +
                          " not divisible by patch " + std::to_string(cfg_.patch));
    }
    if (v.image.width != cfg_.image_size || v.image.height != cfg_.image_size || v.image.channels != 3) {
      throw ContractError("expected " + std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size) +
                          " RGB input views");
    }
  }
}

ad::VarF FeatureLrm::patch_content(ad::TapeF& tape, const std::vector<View>& views) const {
  check_views(views);
  const int p = cfg_.patch;
  const int per_row = cfg_.image_size / p;
  const std::int64_t t = cfg_.tokens_per_view();
  ad::TensorF patches(ad::Shape{static_cast<std::int64_t>(views.size()) * t, 3LL * p * p});
  float* out = patches.ptr();
  for (const auto& v : views) {
    for (std::int64_t k = 0; k < t; ++k) {
      const int py0 = static_cast<int>(k / per_row) * p;
      const int px0 = static_cast<int>(k % per_row) * p;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          for (int c = 0; c < 3; ++c) *out++ = v.image.data[(static_cast<std::size_t>(py0 + y) * v.image.width + px0 + x) * 3 + c];
        }
      }
    }
  }
  return patch_embed_.forward(tape, tape.leaf(std::move(patches), false));
}

ad::VarF FeatureLrm::tokenize(ad::TapeF& tape, const std::vector<View>& views) const {
  const auto content = patch_content(tape, views);
  const std::int64_t t = cfg_.tokens_per_view();
  const int p = cfg_.patch;
  const int per_row = cfg_.image_size / p;
  std::vector<std::int64_t> pos_index;
  ad::TensorF rays(ad::Shape{static_cast<std::int64_t>(views.size()) * t, 6});
  float* r = rays.ptr();
  for (const auto& v : views) {
    for (std::int64_t k = 0; k < t; ++k) {
      pos_index.push_back(k);
      const double u = (static_cast<double>(k % per_row) + 0.5) * p;
      const double w = (static_cast<double>(k / per_row) + 0.5) * p;
      for (double c : ray_code(v.camera, u, w)) *r++ = static_cast<float>(c);
    }
  }
  const auto pos = ad::gather_rows(tape.param(*pos_embed_), pos_index);
  const std::vector<ad::VarF> parts{content, pos, tape.leaf(std::move(rays), false)};
  return token_proj_.forward(tape, ad::concat_cols<float>(parts));
}

ad::VarF FeatureLrm::backbone(ad::TapeF& tape, const ad::VarF& tokens, ad::AttentionMode mode) const {
  const std::vector<std::int64_t> offsets{0, tokens.value().dim(0)};
  auto x = tokens;
  for (const auto& b : blocks_) x = b.forward(tape, x, offsets, mode);
  return final_norm_.forward(tape, x);
}

PixelGaussianVars FeatureLrm::decode(ad::TapeF& tape, const ad::VarF& context, const std::vector<View>& views) const {
  check_views(views);
  const int s = cfg_.image_size;
  const int p = cfg_.patch;
  const int pp = p * p;
  const int per_row = s / p;
  const std::int64_t t = cfg_.tokens_per_view();
  const std::int64_t a = cfg_.attributes();
  const std::int64_t n_tok = context.value().dim(0);
  if (n_tok != t * static_cast<std::int64_t>(views.size())) throw ContractError("context tokens not aligned to views");
  const std::int64_t n = n_tok * pp;

  PixelGaussianVars out;
  out.pixel_of.resize(static_cast<std::size_t>(n));
  out.token_of.resize(static_cast<std::size_t>(n));
  ad::TensorF origins(ad::Shape{n, 3}), dirs(ad::Shape{n, 3}), dc_skip(ad::Shape{n, 3});
  for (std::int64_t row = 0; row < n; ++row) {
    const std::int64_t tok = row / pp;
    const int q = static_cast<int>(row % pp);
    const auto v = static_cast<std::size_t>(tok / t);
    const std::int64_t k = tok % t;
    const int y = static_cast<int>(k / per_row) * p + q / p;
    const int x = static_cast<int>(k % per_row) * p + q % p;
    out.token_of[static_cast<std::size_t>(row)] = tok;
    out.pixel_of[static_cast<std::size_t>(row)] = static_cast<std::int64_t>(v) * s * s + y * s + x;
    const auto& cam = views[v].camera;
    const Vec3 o = cam.center();
    const Vec3 d = cam.ray_dir(x + 0.5, y + 0.5);
    for (int c = 0; c < 3; ++c) {
      origins[row * 3 + c] = static_cast<float>(o[static_cast<std::size_t>(c)]);
      dirs[row * 3 + c] = static_cast<float>(d[static_cast<std::size_t>(c)]);
      dc_skip[row * 3 + c] =
          static_cast<float>(splat::rgb_to_dc(views[v].image.data[(static_cast<std::size_t>(y) * s + x) * 3 + c]));
    }
  }

  const auto raw = ad::reshape(head_.forward(tape, context), ad::Shape{n, a});
  const auto depth = ad::add_scalar(ad::scale(ad::tanh(ad::slice_cols(raw, 0, 1)), static_cast<float>(cfg_.depth_range)),
                                    static_cast<float>(cfg_.depth_center));
  const auto ones = tape.leaf(ad::TensorF(ad::Shape{1, 3}, 1.f), false);
  out.depth = depth;
  out.splats.positions =
      ad::add(tape.leaf(std::move(origins), false), ad::mul(ad::matmul(depth, ones), tape.leaf(std::move(dirs), false)));
  out.splats.log_scales = ad::add_scalar(ad::scale(ad::tanh(ad::scale(ad::slice_cols(raw, 1, 4), 0.5f)), 2.f),
                                         static_cast<float>(cfg_.log_scale_base));
  out.splats.rotations =
      ad::add_row(ad::slice_cols(raw, 4, 8), tape.leaf(ad::TensorF(ad::Shape{4}, {1.f, 0.f, 0.f, 0.f}), false));
  const auto cap = static_cast<float>(cfg_.opacity_logit_cap);
  out.splats.opacity_logits = ad::clamp(ad::slice_cols(raw, 8, 9), -cap, cap);
  auto sh = ad::add(ad::slice_cols(raw, 9, 12), tape.leaf(std::move(dc_skip), false));
  if (a > 12) {
    const std::vector<ad::VarF> parts{sh, ad::slice_cols(raw, 12, a)};
    sh = ad::concat_cols<float>(parts);
  }
  out.splats.sh = sh;
  out.splats.sh_degree = cfg_.sh_degree;
  return out;
}

ImageTokens FeatureLrm::encode_views(const std::vector<View>& views) const {
  ad::TapeF tape;
  tape.set_grad_enabled(false);
  ImageTokens out;
  out.tokens = backbone(tape, tokenize(tape, views)).value();
  out.views = static_cast<int>(views.size());
  out.tokens_per_view = cfg_.tokens_per_view();
  out.patch = cfg_.patch;
  for (const auto& v : views) out.cameras.push_back(v.camera);
  return out;
}

FeatureGaussians FeatureLrm::reconstruct(const std::vector<View>& views) const {
  ad::TapeF tape;
  tape.set_grad_enabled(false);
  const auto ctx = backbone(tape, tokenize(tape, views));
  const auto px = decode(tape, ctx, views);
  FeatureGaussians out;
  out.tokens = ctx.value();
  out.token_of = px.token_of;
  out.pixel_of = px.pixel_of;
  out.gaussians = raster::to_scene(px.splats);
  return out;
}

std::vector<splat::Camera> FeatureLrm::input_cameras() const {
  return splat::canonical_cameras({0.0, 0.0, 0.0}, cfg_.camera_radius, cfg_.image_size, cfg_.image_size,
                                  cfg_.fov_y_deg);
}

std::vector<View> FeatureLrm::render_inputs(const splat::SplatScene& scene) const {
  const auto cams = input_cameras();
  const auto renders = raster::render_views(scene, cams);
  std::vector<View> views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    View v;
    v.camera = cams[i];
    v.image = io::Image(cfg_.image_size, cfg_.image_size, 3);
    v.image.data = renders[i].color;
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace splatedit::lrm
