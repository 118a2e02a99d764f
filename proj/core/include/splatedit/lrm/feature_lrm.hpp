// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "splatedit/common/image.hpp"
#include "splatedit/nn/layers.hpp"
#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/splat/camera.hpp"
#include "splatedit/splat/scene.hpp"

// Small multiview reconstruction model: patch tokens from posed images, a
// self-attention backbone, and a per-pixel Gaussian head. Its contextual
// tokens double as per-Gaussian features for the compressor and as edit-view
// tokens for the refiner.
namespace splatedit::lrm {

struct LrmConfig {
  int image_size = 32;
  int patch = 4;
  int dim = 64;
  int layers = 4;
  int heads = 4;
  int mlp_hidden = 128;
  int sh_degree = 1;
  /// Depth along each ray is depth_center + depth_range * tanh(raw).
  double depth_center = 3.0;
  double depth_range = 1.2;
  /// Log-scale is log_scale_base + 2 tanh(raw / 2).
  double log_scale_base = -3.3;
  /// Decoded opacity logits are clamped to +-opacity_logit_cap, so opacity
  /// never drops below sigmoid(-cap).
  double opacity_logit_cap = 9.21;
  double prune_threshold = 0.005;
  /// Input rig: canonical cameras on a sphere of this radius about the origin.
  double camera_radius = 3.0;
  double fov_y_deg = 45.0;

  int tokens_per_view() const { return (image_size / patch) * (image_size / patch); }
  int attributes() const;  // per-pixel head outputs
};

/// An image with its camera. Images are RGB floats in [0, 1].
struct View {
  io::Image image;
  splat::Camera camera;
};

/// Per-view token sequences stored back to back: rows [v*T, (v+1)*T) belong
/// to view v, patches in row-major order.
struct ImageTokens {
  ad::TensorF tokens;  // [V*T x D]
  int views = 0;
  int tokens_per_view = 0;
  int patch = 0;
  std::vector<splat::Camera> cameras;
};

/// Per-pixel Gaussians with aligned features. Gaussian i carries the
/// contextual token of the patch that produced it.
struct FeatureGaussians {
  splat::SplatScene gaussians;
  ad::TensorF tokens;                  // [V*T x D] contextual tokens
  std::vector<std::int64_t> token_of;  // per Gaussian, row of `tokens`
  std::vector<std::int64_t> pixel_of;  // per Gaussian, v*H*W + y*W + x

  std::int64_t size() const { return gaussians.size(); }
  /// Dense [N x D] feature matrix f_k.
  ad::TensorF features() const;
  /// Keeps Gaussians with opacity >= threshold, preserving alignment.
  FeatureGaussians pruned(double threshold) const;
};

/// Differentiable per-pixel decode, one row per input pixel in token-major,
/// then in-patch row-major order.
struct PixelGaussianVars {
  raster::SplatVars<float> splats;
  ad::VarF depth;                      // [N x 1] along-ray distance
  std::vector<std::int64_t> pixel_of;  // v*H*W + y*W + x
  std::vector<std::int64_t> token_of;
};

class FeatureLrm {
 public:
  /// Registers parameters under "lrm." in `store`.
  FeatureLrm(const LrmConfig& cfg, nn::ParamStore& store, Rng& rng);

  const LrmConfig& config() const { return cfg_; }

  /// Content embedding of every patch, without position or camera codes. [V*T x D]
  ad::VarF patch_content(ad::TapeF& tape, const std::vector<View>& views) const;
  /// Full token embedding. ContractError unless every image is square
  /// image_size and divisible by the patch size.
  ad::VarF tokenize(ad::TapeF& tape, const std::vector<View>& views) const;
  ad::VarF backbone(ad::TapeF& tape, const ad::VarF& tokens,
                    ad::AttentionMode mode = ad::AttentionMode::kSoftmax) const;
  PixelGaussianVars decode(ad::TapeF& tape, const ad::VarF& context, const std::vector<View>& views) const;

  /// Inference: tokenize + backbone with no gradients.
  ImageTokens encode_views(const std::vector<View>& views) const;
  /// Inference end to end, unpruned (V*H*W Gaussians).
  FeatureGaussians reconstruct(const std::vector<View>& views) const;

  /// The input rig for an object centred at the origin.
  std::vector<splat::Camera> input_cameras() const;
  /// Renders `scene` from the input rig on a black background.
  std::vector<View> render_inputs(const splat::SplatScene& scene) const;

  const std::vector<nn::SelfAttentionBlock>& blocks() const { return blocks_; }

 private:
  void check_views(const std::vector<View>& views) const;

  LrmConfig cfg_;
  nn::Linear patch_embed_;
  nn::Param* pos_embed_ = nullptr;
  nn::Linear token_proj_;
  std::vector<nn::SelfAttentionBlock> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;
};

/// Plucker ray code (d, o x d) for image point (u, v).
std::array<double, 6> ray_code(const splat::Camera& cam, double u, double v);

}  // namespace splatedit::lrm
