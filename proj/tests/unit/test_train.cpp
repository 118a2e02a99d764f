// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "splatedit/splat/synth.hpp"
#include "splatedit/train/losses.hpp"
#include "splatedit/train/tasks.hpp"
#include "splatedit/train/trainer.hpp"

namespace splatedit::train {
namespace {

namespace fs = std::filesystem;

ad::TensorF random_image(Rng& rng, int h, int w) {
  ad::TensorF t(ad::Shape{h, w, 3});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(0.2, 0.8));
  return t;
}

double loss_of(const ad::TensorF& a, const ad::TensorF& b, double lambda) {
  ad::TapeF tape;
  return recon_loss(tape.leaf(a, false), tape.leaf(b, false), lambda).value()[0];
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("splatedit_train_" + name);
  fs::remove_all(p);
  return p;
}

ModelConfig tiny_config() {
  ModelConfig m;
  m.lrm.image_size = 16;
  m.lrm.dim = 16;
  m.lrm.layers = 1;
  m.lrm.heads = 2;
  m.lrm.mlp_hidden = 32;
  m.comp.feature_dim = 16;
  m.comp.dim = 16;
  m.comp.heads = 2;
  m.comp.enc_layers = 1;
  m.comp.dec_layers = 1;
  m.comp.mlp_hidden = 32;
  m.comp.grid_resolution = 16;
  m.ttt.dim = 16;
  m.ttt.fast_hidden = 32;
  m.ttt.mlp_hidden = 32;
  m.ttt.heads = 2;
  return m;
}

TrainConfig quick(int steps) {
  TrainConfig c;
  c.steps = steps;
  c.warmup = 1;
  c.lr = 3e-3;
  c.target_views = 1;
  return c;
}

// ---------------------------------------------------------------------------
// Losses and metrics

TEST(ReconLoss, IdenticalImagesGiveZero) {
  Rng rng(1);
  const auto a = random_image(rng, 16, 16);
  EXPECT_EQ(loss_of(a, a, 0.5), 0.0);
}

TEST(ReconLoss, LambdaZeroIsMse) {
  Rng rng(2);
  const auto a = random_image(rng, 8, 12), b = random_image(rng, 8, 12);
  double se = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) se += std::pow(double(a[i]) - b[i], 2);
  EXPECT_NEAR(loss_of(a, b, 0.0), se / static_cast<double>(a.numel()), 1e-7);
}

TEST(ReconLoss, ConstantShiftHasNoPerceptualTerm) {
  Rng rng(3);
  const auto a = random_image(rng, 16, 16);
  auto b = a;
  for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1f;
  EXPECT_NEAR(loss_of(a, b, 0.5), 0.01, 1e-6);
}

TEST(ReconLoss, PerceptualTermPenalisesStructure) {
  // Equal pixel error, once as a flat shift and once as a checkerboard.
  Rng rng(4);
  const auto a = random_image(rng, 16, 16);
  auto flat = a, checker = a;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::int64_t i = (y * 16 + x) * 3 + c;
        flat[i] += 0.1f;
        checker[i] += (x + y) % 2 == 0 ? 0.1f : -0.1f;
      }
    }
  }
  EXPECT_NEAR(loss_of(a, flat, 0.0), loss_of(a, checker, 0.0), 1e-7);
  EXPECT_GT(loss_of(a, checker, 0.5), loss_of(a, flat, 0.5) + 0.01);
}

TEST(ReconLoss, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  ad::TensorD a(ad::Shape{8, 8, 3}), b(ad::Shape{8, 8, 3});
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform();
  }
  const auto res = testing::grad_check({a, b}, [](ad::TapeD&, const std::vector<ad::VarD>& x) {
    return recon_loss(x[0], x[1], 0.7);
  });
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(ReconLoss, ShapeErrors) {
  Rng rng(6);
  EXPECT_THROW(loss_of(random_image(rng, 8, 8), random_image(rng, 8, 12), 0.5), ShapeError);
  EXPECT_THROW(loss_of(random_image(rng, 6, 8), random_image(rng, 6, 8), 0.5), ShapeError);
  EXPECT_NO_THROW(loss_of(random_image(rng, 6, 8), random_image(rng, 6, 8), 0.0));
  EXPECT_THROW(loss_of(random_image(rng, 8, 8), random_image(rng, 8, 8), -1.0), ContractError);
}

TEST(Metrics, PsnrKnownValues) {
  io::Image a(16, 16, 3, 0.5f), b(16, 16, 3, 0.6f);
  EXPECT_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
  EXPECT_THROW(psnr(a, io::Image(8, 16, 3)), ShapeError);
}

TEST(Metrics, SsimIsOneForIdenticalAndDropsWithNoise) {
  Rng rng(7);
  io::Image a(24, 24, 3);
  for (auto& v : a.data) v = static_cast<float>(rng.uniform());
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  auto b = a, c = a;
  for (auto& v : b.data) v += static_cast<float>(rng.normal(0, 0.05));
  for (auto& v : c.data) v += static_cast<float>(rng.normal(0, 0.2));
  EXPECT_LT(ssim(a, b), 1.0);
  EXPECT_LT(ssim(a, c), ssim(a, b));
  EXPECT_THROW(ssim(io::Image(8, 8, 3), io::Image(8, 8, 3)), ShapeError);
}

// ---------------------------------------------------------------------------
// Recolor

Mat3d mul(const Mat3d& a, const Mat3d& b) {
  Mat3d c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

TEST(Recolor, HueMatrixIsRotationAboutGrey) {
  for (double deg : {-150.0, -60.0, 37.0, 120.0}) {
    const auto m = hue_matrix(deg);
    const auto mmt = mul(m, {{{m[0][0], m[1][0], m[2][0]}, {m[0][1], m[1][1], m[2][1]}, {m[0][2], m[1][2], m[2][2]}}});
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(mmt[i][j], i == j ? 1.0 : 0.0, 1e-12);
      EXPECT_NEAR(m[i][0] + m[i][1] + m[i][2], 1.0, 1e-12);  // grey is fixed
    }
    const auto composed = mul(hue_matrix(deg), hue_matrix(30.0));
    const auto direct = hue_matrix(deg + 30.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(composed[i][j], direct[i][j], 1e-12);
  }
  const auto full = hue_matrix(360.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(full[i][j], i == j ? 1.0 : 0.0, 1e-12);
}

splat::SplatScene mid_tone_scene() {
  splat::SplatScene s(1);
  Rng rng(8);
  for (int i = 0; i < 12; ++i) {
    splat::Gaussian g;
    g.position = {static_cast<float>(rng.uniform(-0.4, 0.4)), static_cast<float>(rng.uniform(-0.4, 0.4)),
                  static_cast<float>(rng.uniform(-0.4, 0.4))};
    g.log_scale = {-2.0f, -2.2f, -2.5f};
    g.rotation = {1.f, static_cast<float>(rng.uniform(-0.5, 0.5)), 0.2f, 0.f};
    g.opacity_logit = 1.0f;
    g.sh.assign(12, 0.f);
    for (int c = 0; c < 3; ++c) g.sh[static_cast<std::size_t>(c)] = static_cast<float>(splat::rgb_to_dc(rng.uniform(0.35, 0.65)));
    for (std::size_t k = 3; k < 12; ++k) g.sh[k] = static_cast<float>(rng.uniform(-0.03, 0.03));
    s.push_back(g);
  }
  return s;
}

TEST(Recolor, UnshadedSceneRendersAsHueRotatedImage) {
  const auto base = mid_tone_scene();
  RecolorParams p;
  p.hue_deg = 110.0;
  p.ambient = 1.0;
  const auto cam = splat::orbit_camera({0, 0, 0}, 3.0, 25.0, 15.0, 24, 24);
  const auto before = raster::rasterize(base, cam);
  const auto after = raster::rasterize(recolor_scene(base, p), cam);
  const auto m = hue_matrix(p.hue_deg);
  double worst = 0;
  for (std::size_t px = 0; px < before.alpha.size(); ++px) {
    for (int i = 0; i < 3; ++i) {
      double expect = 0;
      for (int j = 0; j < 3; ++j) expect += m[i][j] * before.color[px * 3 + j];
      worst = std::max(worst, std::abs(expect - after.color[px * 3 + i]));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Recolor, ShadeFollowsSurfaceNormal) {
  splat::SplatScene s(0);
  splat::Gaussian g;
  g.log_scale = {-2.f, -2.f, -5.f};  // normal along local z
  g.sh = {0.f, 0.f, 0.f};
  s.push_back(g);
  RecolorParams p;
  p.ambient = 0.4;
  p.light_dir = {0, 0, 1};
  EXPECT_NEAR(gaussian_shade(s, 0, p), 1.0, 1e-9);
  p.light_dir = {1, 0, 0};
  EXPECT_NEAR(gaussian_shade(s, 0, p), 0.4, 1e-9);
  p.light_dir = {0, 0, -1};
  EXPECT_NEAR(gaussian_shade(s, 0, p), 1.0, 1e-9);
}

TEST(Recolor, SampleTargetsAreRendersOfTheEditedScene) {
  Rng rng(9);
  const auto base = splat::synth_scene(splat::random_synth_spec(rng, 1, 0.06), 3);
  TaskConfig tc;
  const auto s = make_recolor_sample(base, 3, 4, rng, tc);
  ASSERT_EQ(s.edits.size(), 3u);
  ASSERT_EQ(s.targets.size(), 4u);
  EXPECT_EQ(s.mode, ttt::EditMode::kGlobal);
  const auto again = to_image(raster::rasterize(s.edited, s.targets[2]).color, tc.image_size, tc.image_size);
  EXPECT_EQ(again.data, s.target_images[2].data);
  EXPECT_LT(psnr(to_image(raster::rasterize(base, s.targets[0]).color, 32, 32), s.target_images[0]), 40.0);
}

// ---------------------------------------------------------------------------
// Graffiti

TEST(Graffiti, LayerIsBlankOutsideTheMask) {
  Rng rng(10);
  const auto strokes = random_strokes(rng, 32, 32, 2);
  const auto mask = stroke_mask(strokes, 32, 32);
  const auto layer = stroke_layer(strokes, 32, 32);
  int on = 0;
  for (int i = 0; i < 32 * 32; ++i) {
    if (mask.data[static_cast<std::size_t>(i)] != 0) {
      ++on;
      continue;
    }
    for (int c = 0; c < 3; ++c) EXPECT_EQ(layer.data[static_cast<std::size_t>(i) * 3 + c], 0.f);
  }
  EXPECT_GT(on, 10);
  EXPECT_LT(on, 32 * 32 / 2);
}

TEST(Graffiti, OnlyVisibleGaussiansUnderStrokesArePainted) {
  Rng rng(11);
  const auto base = splat::synth_scene(splat::random_synth_spec(rng, 1, 0.06), 5);
  const auto cam = splat::orbit_camera({0, 0, 0}, 2.2, 30.0, 20.0, 32, 32);
  const auto strokes = random_strokes(rng, 32, 32, 2);
  const auto mask = stroke_mask(strokes, 32, 32);
  const auto painted = paint_scene(base, cam, strokes);
  ASSERT_EQ(painted.size(), base.size());
  int changed = 0;
  for (std::int64_t i = 0; i < base.size(); ++i) {
    const auto a = base.gaussian(i), b = painted.gaussian(i);
    EXPECT_EQ(a.position, b.position);
    EXPECT_EQ(a.opacity_logit, b.opacity_logit);
    if (a.sh == b.sh) continue;
    ++changed;
    const Vec3 pc = cam.to_camera({a.position[0], a.position[1], a.position[2]});
    const int x = static_cast<int>(std::floor(cam.fx * pc[0] / pc[2] + cam.cx));
    const int y = static_cast<int>(std::floor(cam.fy * pc[1] / pc[2] + cam.cy));
    ASSERT_TRUE(x >= 0 && x < 32 && y >= 0 && y < 32);
    EXPECT_NE(mask.data[static_cast<std::size_t>(y * 32 + x)], 0);
    for (std::size_t k = 3; k < b.sh.size(); ++k) EXPECT_EQ(b.sh[k], 0.f);
  }
  EXPECT_GT(changed, 0);
  EXPECT_LT(changed, base.size() / 2);
}

TEST(Graffiti, SampleHasMaskedZoomViewsAndTwoTargetsEach) {
  Rng rng(12);
  const auto base = splat::synth_scene(splat::random_synth_spec(rng, 1, 0.06), 6);
  const auto s = make_graffiti_sample(base, 3, rng);
  EXPECT_EQ(s.mode, ttt::EditMode::kLocal);
  ASSERT_EQ(s.edits.size(), 3u);
  EXPECT_EQ(s.targets.size(), 6u);
  for (const auto& e : s.edits) {
    ASSERT_TRUE(e.mask.has_value());
    EXPECT_NEAR(norm(e.view.camera.center()), TaskConfig{}.zoom_radius, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Configuration and checkpoints

TEST(Config, TrainConfigRoundTripsThroughJson) {
  TrainConfig c;
  c.stage = "stage2";
  c.steps = 17;
  c.edit_mode = "local";
  c.layer_kind = "cross-attention";
  c.seed = 99;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(nlohmann::json({{"stpes", 3}}).get<TrainConfig>(), ContractError);
  EXPECT_THROW(nlohmann::json({{"stage", "stage3"}}).get<TrainConfig>(), ContractError);
  EXPECT_THROW(nlohmann::json({{"edit_mode", "sideways"}}).get<TrainConfig>(), ContractError);
  EXPECT_THROW(nlohmann::json({{"views_min", 3}, {"views_max", 2}}).get<TrainConfig>(), ContractError);
}

TEST(Config, ModelConfigRoundTripsAndValidates) {
  auto m = tiny_config();
  m.comp.mode = compress::DistillMode::kVoxelMean;
  m.ttt.kind = ttt::LayerKind::kCrossAttention;
  const nlohmann::json j = m;
  EXPECT_EQ(nlohmann::json(j.get<ModelConfig>()), j);
  m.ttt.dim = 24;
  EXPECT_THROW(m.validate(), ContractError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const auto dir = scratch("roundtrip");
  Models a(tiny_config(), 3);
  a.save(dir.string());
  EXPECT_TRUE(has_checkpoint(dir.string()));
  const auto b = Models::load(dir.string());
  EXPECT_EQ(a.store.fingerprint(), b->store.fingerprint());
  EXPECT_EQ(nlohmann::json(a.config), nlohmann::json(b->config));
  fs::remove_all(dir);
}

TEST(Checkpoint, MissingCheckpointNamesTheFile) {
  const auto dir = scratch("missing");
  EXPECT_FALSE(has_checkpoint(dir.string()));
  try {
    Models::load(dir.string());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("model.json"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct TinyData {
  ModelConfig cfg = tiny_config();
  SceneSet data = SceneSet::generate(2, 21, cfg.lrm);
};

TEST(Training, Stage1UpdatesOnlyTheCompressor) {
  TinyData t;
  Models m(t.cfg, 1);
  const auto features = lrm_features(m, t.data);
  const auto lrm0 = m.store.fingerprint("lrm."), ttt0 = m.store.fingerprint("ttt."), comp0 = m.store.fingerprint("comp.");
  const auto r = train_stage1(m, t.data, features, quick(3));
  EXPECT_EQ(r.losses.size(), 3u);
  EXPECT_EQ(m.store.fingerprint("lrm."), lrm0);
  EXPECT_EQ(m.store.fingerprint("ttt."), ttt0);
  EXPECT_NE(m.store.fingerprint("comp."), comp0);
}

TEST(Training, Stage2UpdatesOnlyTheRefinerIncludingMergeLayer) {
  TinyData t;
  Models m(t.cfg, 2);
  const auto latents = stage1_latents(m, lrm_features(m, t.data));
  const auto lrm0 = m.store.fingerprint("lrm."), comp0 = m.store.fingerprint("comp.");
  const auto merge0 = m.store.fingerprint("ttt.merge"), layer0 = m.store.fingerprint("ttt.layer0");
  auto cfg = quick(2);
  cfg.edit_mode = "local";
  train_stage2(m, t.data, latents, cfg);
  EXPECT_EQ(m.store.fingerprint("lrm."), lrm0);
  EXPECT_EQ(m.store.fingerprint("comp."), comp0);
  EXPECT_NE(m.store.fingerprint("ttt.merge"), merge0);
  EXPECT_NE(m.store.fingerprint("ttt.layer0"), layer0);
}

TEST(Training, LossDecreasesOnAFixedScene) {
  TinyData t;
  t.data.items.resize(1);
  Models m(t.cfg, 4);
  const auto features = lrm_features(m, t.data);
  auto cfg = quick(40);
  cfg.lr = 5e-3;
  const auto r = train_stage1(m, t.data, features, cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += r.losses[static_cast<std::size_t>(i)];
    tail += r.losses[r.losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, 0.8 * head);
}

TEST(Training, ResumeReproducesTheUninterruptedRun) {
  TinyData t;
  const auto dir_a = scratch("resume_a"), dir_b = scratch("resume_b");
  auto cfg = quick(6);
  cfg.checkpoint_every = 3;

  Models full(t.cfg, 5);
  const auto features = lrm_features(full, t.data);
  cfg.out_dir = dir_a.string();
  const auto reference = train_stage1(full, t.data, features, cfg);

  cfg.out_dir = dir_b.string();
  cfg.stop_at = 3;
  {
    Models first(t.cfg, 5);
    train_stage1(first, t.data, features, cfg);
  }
  Models second(t.cfg, 77);  // different init: everything must come from the checkpoint
  cfg.stop_at = -1;
  cfg.resume = true;
  const auto resumed = train_stage1(second, t.data, features, cfg);
  ASSERT_EQ(resumed.first_step, 3);
  ASSERT_EQ(resumed.losses.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(resumed.losses[i], reference.losses[3 + i]) << "step " << 3 + i;
  EXPECT_EQ(second.store.fingerprint(), full.store.fingerprint());

  std::ifstream csv(dir_b / "train_log.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,loss,lr,grad_norm,seconds");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 6);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST(Training, DivergenceRestoresTheLastCheckpoint) {
  TinyData t;
  Models m(t.cfg, 6);
  const auto dir = scratch("diverge");
  auto cfg = quick(6);
  cfg.checkpoint_every = 2;
  cfg.out_dir = dir.string();
  nn::Param& w = m.store.at(m.store.parameters("comp.").front()->name);
  ad::NamedTensors at_checkpoint;
  const auto loss = [&](ad::TapeF& tape, int step, Rng&) {
    if (step == 2) at_checkpoint = m.store.state("comp.");
    auto l = ad::sum(ad::square(tape.param(w)));
    if (step == 3) l = ad::scale(l, std::numeric_limits<float>::quiet_NaN());
    return l;
  };
  EXPECT_THROW(run_training(m, "comp.", cfg, loss), DivergenceError);
  const auto now = m.store.state("comp.");
  ASSERT_EQ(now.size(), at_checkpoint.size());
  for (std::size_t i = 0; i < now.size(); ++i) {
    EXPECT_EQ(std::vector<float>(now[i].second.ptr(), now[i].second.ptr() + now[i].second.numel()),
              std::vector<float>(at_checkpoint[i].second.ptr(), at_checkpoint[i].second.ptr() + at_checkpoint[i].second.numel()));
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace splatedit::train
