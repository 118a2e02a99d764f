// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

// splatedit: preprocess / edit / render / train / eval.
// Exit codes: 0 success (including a local edit that hits nothing),
// 1 runtime error, 2 missing checkpoint or input file, CLI11 codes for usage errors.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "splatedit/common/image.hpp"
#include "splatedit/compress/compressor.hpp"
#include "splatedit/service/protocol.hpp"
#include "splatedit/splat/ply.hpp"
#include "splatedit/train/trainer.hpp"
#include "splatedit/ttt/session.hpp"

namespace {

namespace fs = std::filesystem;
using namespace splatedit;
using nlohmann::json;

constexpr int kMissing = 2;

/// Missing checkpoint or input file.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw MissingInput(std::string(what) + " not found: " + path);
}

std::unique_ptr<train::Models> load_models(const std::string& dir) {
  if (!train::has_checkpoint(dir)) {
    throw MissingInput("checkpoint not found in '" + dir + "' (expected model.json and params.ckpt)");
  }
  return train::Models::load(dir);
}

splat::Camera load_camera(const std::string& path) {
  require_file(path, "camera file");
  std::ifstream in(path);
  auto cam = json::parse(in).get<splat::Camera>();
  cam.validate();
  return cam;
}

voxel::PixelMask load_mask(const std::string& path, int width, int height) {
  require_file(path, "mask file");
  voxel::PixelMask m;
  if (fs::path(path).extension() == ".json") {
    std::ifstream in(path);
    m = service::decode_mask(json::parse(in));
  } else {
    const auto img = io::load_png(path);
    m.width = img.width;
    m.height = img.height;
    m.data.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) m.data[static_cast<std::size_t>(y * img.width + x)] = img.at(x, y, 0) > 0.5f;
  }
  if (m.width != width || m.height != height) throw ContractError("mask size differs from the edit image");
  return m;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct Common {
  std::string checkpoint = "checkpoints/smoke/stage2_ttt";
};

int cmd_preprocess(const Common& c, const std::string& asset, const std::string& out) {
  const auto models = load_models(c.checkpoint);
  require_file(asset, "asset");
  const auto scene = splat::load_ply(asset);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = compress::compress_asset(scene, models->lrm(), models->comp());
  const double secs = since(t0);
  compress::save_latents(out, res.latents);
  std::printf("timing stage=preprocess seconds=%.6f gaussians_in=%lld lrm_gaussians=%lld latents=%lld voxels=%zu\n", secs,
              static_cast<long long>(scene.size()), static_cast<long long>(res.source.size()),
              static_cast<long long>(res.latents.rows()), res.latents.cells.size());
  return 0;
}

struct EditArgs {
  std::string latents, image, camera, out;
  std::string mode = "global";
  std::string mask;
  std::vector<std::string> extra;  // image, camera pairs
  std::string session_in, session_out;
};

int cmd_edit(const Common& c, const EditArgs& a) {
  const auto models = load_models(c.checkpoint);
  require_file(a.latents, "latent file");
  const auto mode = ttt::edit_mode_from_string(a.mode);
  const auto editor = models->editor();
  auto base = compress::load_latents(a.latents);
  auto session = a.session_in.empty() ? editor.start(base) : ttt::load_snapshot(a.session_in, base);

  std::vector<ttt::EditView> edits;
  const auto add_view = [&](const std::string& image, const std::string& camera) {
    require_file(image, "edit image");
    ttt::EditView e;
    e.view.image = io::load_png(image);
    e.view.camera = load_camera(camera);
    if (e.view.image.width != e.view.camera.width || e.view.image.height != e.view.camera.height) {
      throw ContractError("edit image " + image + " does not match its camera size");
    }
    edits.push_back(std::move(e));
  };
  add_view(a.image, a.camera);
  if (a.extra.size() % 2 != 0) throw ContractError("--view takes an image and a camera");
  for (std::size_t i = 0; i < a.extra.size(); i += 2) add_view(a.extra[i], a.extra[i + 1]);
  if (!a.mask.empty()) edits.front().mask = load_mask(a.mask, edits.front().view.image.width, edits.front().view.image.height);

  const auto t0 = std::chrono::steady_clock::now();
  const auto report = editor.refine(session, edits, mode);
  const double secs = since(t0);
  splat::save_ply(session.scene, a.out);
  if (!a.session_out.empty()) ttt::save_snapshot(a.session_out, session);
  if (!report.applied) std::fprintf(stderr, "warning: %s; output equals the input scene\n", report.warning.c_str());
  const std::string hit = mode == ttt::EditMode::kGlobal ? "all" : std::to_string(report.hit_voxels);
  std::printf("timing stage=edit mode=%s seconds=%.6f hit=%s voxels=%zu gaussians=%lld applied=%d\n", a.mode.c_str(), secs,
              hit.c_str(), session.current.cells.size(), static_cast<long long>(report.gaussians), report.applied ? 1 : 0);
  return 0;
}

int cmd_render(const Common& c, const std::string& input, const std::string& camera, const std::string& out) {
  require_file(input, "input");
  const auto cam = load_camera(camera);
  splat::SplatScene scene;
  const auto ext = fs::path(input).extension().string();
  if (ext == ".ply") {
    scene = splat::load_ply(input);
  } else {
    // Latents, or a session snapshot together with its base latents.
    const auto models = load_models(c.checkpoint);
    scene = models->comp().decode(compress::load_latents(input));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = raster::rasterize(scene, cam);
  io::Image img(cam.width, cam.height, 3);
  img.data = r.color;
  const double secs = since(t0);
  if (fs::path(out).extension() == ".raw") {
    io::save_raw(out, img);
  } else {
    io::save_png(out, img);
  }
  std::printf("timing stage=render seconds=%.6f gaussians=%lld\n", secs, static_cast<long long>(scene.size()));
  return 0;
}

int cmd_train(const std::vector<std::string>& configs) {
  for (const auto& path : configs) {
    require_file(path, "training config");
    const auto cfg = train::load_train_config(path);
    if (!cfg.init_dir.empty() && !train::has_checkpoint(cfg.init_dir)) {
      throw MissingInput("checkpoint not found in '" + cfg.init_dir + "'");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train::run_stage(cfg);
    std::printf("timing stage=train:%s seconds=%.3f steps=%zu final_loss=%.6f out=%s\n", cfg.stage.c_str(), since(t0),
                r.losses.size(), r.losses.empty() ? 0.0 : r.losses.back(), cfg.out_dir.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& config) {
  require_file(config, "evaluation config");
  const auto spec = train::load_eval_spec(config);
  if (!train::has_checkpoint(spec.checkpoint)) throw MissingInput("checkpoint not found in '" + spec.checkpoint + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = train::run_eval_suite(spec);
  std::cout << report.table();
  std::printf("timing stage=eval seconds=%.3f rows=%zu\n", since(t0), report.csv_rows());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatedit: compressed splat assets with test-time-trained editing"};
  app.require_subcommand(1);
  Common common;
  bool verbose = false;
  app.add_option("--checkpoint", common.checkpoint, "Directory with model.json and params.ckpt")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Log progress");

  std::string asset, out, input, camera;
  auto* pre = app.add_subcommand("preprocess", "Compress a .ply asset into voxel latents (Stage I)");
  pre->add_option("asset", asset, "Input .ply")->required();
  pre->add_option("out", out, "Output latent file")->required();

  EditArgs ea;
  auto* edit = app.add_subcommand("edit", "Refine latents with edited views and save the scene");
  edit->add_option("latents", ea.latents, "Base latent file")->required();
  edit->add_option("image", ea.image, "Edited view (.png)")->required();
  edit->add_option("camera", ea.camera, "Camera JSON of the edited view")->required();
  edit->add_option("out", ea.out, "Output .ply")->required();
  edit->add_option("--mode", ea.mode, "global or local")->check(CLI::IsMember({"global", "local"}))->capture_default_str();
  edit->add_option("--mask", ea.mask, "Stroke mask for the first view (.png or RLE .json)");
  edit->add_option("--view", ea.extra, "Additional edited view: IMAGE CAMERA")->expected(2)->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  edit->add_option("--session", ea.session_in, "Continue from a session snapshot");
  edit->add_option("--save-session", ea.session_out, "Write the session snapshot after the edit");

  auto* render = app.add_subcommand("render", "Render a .ply asset or latent file");
  render->add_option("input", input, "Input .ply or latent file")->required();
  render->add_option("camera", camera, "Camera JSON")->required();
  render->add_option("out", out, "Output .png (or .raw for exact floats)")->required();

  std::vector<std::string> train_configs;
  auto* train = app.add_subcommand("train", "Run training stages from JSON configs, in order");
  train->add_option("configs", train_configs, "Training config files")->required();

  std::string eval_config;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints and write the report");
  eval->add_option("config", eval_config, "Evaluation config file")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*pre) return cmd_preprocess(common, asset, out);
    if (*edit) return cmd_edit(common, ea);
    if (*render) return cmd_render(common, input, camera, out);
    if (*train) return cmd_train(train_configs);
    if (*eval) return cmd_eval(eval_config);
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMissing;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
