// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "splatedit/ad/checkpoint.hpp"
#include "splatedit/nn/optim.hpp"
#include "splatedit/splat/synth.hpp"
#include "splatedit/train/losses.hpp"

namespace splatedit::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kModelJson = "model.json";
constexpr const char* kParams = "params.ckpt";
constexpr const char* kOptim = "optim.ckpt";
constexpr const char* kState = "state.json";
constexpr const char* kLog = "train_log.csv";
constexpr std::array<const char*, 3> kModules{"lrm.", "comp.", "ttt."};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), static_cast<std::int64_t>(e.byte));
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

/// Fingerprint of every module outside `prefix`.
std::uint64_t frozen_fingerprint(const nn::ParamStore& store, const std::string& prefix) {
  std::uint64_t h = 0;
  for (const char* m : kModules) {
    if (std::string(m).rfind(prefix, 0) == 0 || prefix.rfind(m, 0) == 0) continue;
    h = h * 1099511628211ULL ^ store.fingerprint(m);
  }
  return h;
}

std::vector<splat::Camera> random_targets(Rng& rng, int count, const lrm::LrmConfig& lrm) {
  TaskConfig tc;
  tc.image_size = lrm.image_size;
  tc.fov_y_deg = lrm.fov_y_deg;
  tc.camera_radius = lrm.camera_radius;
  std::vector<splat::Camera> cams;
  for (int i = 0; i < count; ++i) cams.push_back(random_orbit(rng, tc, tc.camera_radius));
  return cams;
}

ad::VarF image_leaf(ad::TapeF& tape, const std::vector<float>& data, int w, int h) {
  return tape.leaf(ad::TensorF(ad::Shape{h, w, 3}, data), false);
}

/// Mean reconstruction loss of `splats` against ground-truth renders of `truth`.
ad::VarF render_loss(ad::TapeF& tape, const raster::SplatVars<float>& splats, const splat::SplatScene& truth,
                     const std::vector<splat::Camera>& cams, double lambda) {
  std::vector<ad::VarF> terms;
  for (const auto& cam : cams) {
    const auto gt = raster::rasterize(truth, cam);
    const auto pred = raster::render_var(splats, cam);
    terms.push_back(recon_loss(pred, image_leaf(tape, gt.color, cam.width, cam.height), lambda));
  }
  auto total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.f / static_cast<float>(terms.size()));
}

std::vector<std::int64_t> rows_in(const std::vector<voxel::CellId>& row_cells, const std::vector<voxel::CellId>& hits) {
  const std::unordered_set<voxel::CellId> set(hits.begin(), hits.end());
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < row_cells.size(); ++i) {
    if (set.count(row_cells[i]) != 0) rows.push_back(static_cast<std::int64_t>(i));
  }
  return rows;
}

std::vector<lrm::View> views_of(const std::vector<ttt::EditView>& edits) {
  std::vector<lrm::View> v;
  for (const auto& e : edits) v.push_back(e.view);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  if (comp.feature_dim != lrm.dim) throw ContractError("compressor feature width must equal the LRM width");
  if (ttt.dim != comp.dim) throw ContractError("refiner width must equal the latent width");
  if (ttt.dim != lrm.dim) throw ContractError("refiner width must equal the LRM token width");
  if (comp.sh_degree != lrm.sh_degree) throw ContractError("compressor and LRM SH degrees differ");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"lrm",
            {{"image_size", c.lrm.image_size},
             {"patch", c.lrm.patch},
             {"dim", c.lrm.dim},
             {"layers", c.lrm.layers},
             {"heads", c.lrm.heads},
             {"mlp_hidden", c.lrm.mlp_hidden},
             {"sh_degree", c.lrm.sh_degree},
             {"camera_radius", c.lrm.camera_radius},
             {"fov_y_deg", c.lrm.fov_y_deg},
             {"prune_threshold", c.lrm.prune_threshold}}},
           {"comp",
            {{"feature_dim", c.comp.feature_dim},
             {"sh_degree", c.comp.sh_degree},
             {"dim", c.comp.dim},
             {"heads", c.comp.heads},
             {"enc_layers", c.comp.enc_layers},
             {"dec_layers", c.comp.dec_layers},
             {"mlp_hidden", c.comp.mlp_hidden},
             {"grid_resolution", c.comp.grid_resolution},
             {"topk_fraction", c.comp.topk_fraction},
             {"mode", compress::to_string(c.comp.mode)}}},
           {"ttt",
            {{"dim", c.ttt.dim},
             {"fast_hidden", c.ttt.fast_hidden},
             {"mlp_hidden", c.ttt.mlp_hidden},
             {"layers", c.ttt.layers},
             {"heads", c.ttt.heads},
             {"kind", ttt::to_string(c.ttt.kind)},
             {"inner_lr", c.ttt.muon.lr},
             {"inner_momentum", c.ttt.muon.momentum},
             {"inner_steps", c.ttt.muon.steps},
             {"ns_iters", c.ttt.muon.ns_iters},
             {"detach_inner", c.ttt.muon.detach_updates}}}};
}

void from_json(const json& j, ModelConfig& c) {
  if (j.contains("lrm")) {
    const auto& l = j.at("lrm");
    get_opt(l, "image_size", c.lrm.image_size);
    get_opt(l, "patch", c.lrm.patch);
    get_opt(l, "dim", c.lrm.dim);
    get_opt(l, "layers", c.lrm.layers);
    get_opt(l, "heads", c.lrm.heads);
    get_opt(l, "mlp_hidden", c.lrm.mlp_hidden);
    get_opt(l, "sh_degree", c.lrm.sh_degree);
    get_opt(l, "camera_radius", c.lrm.camera_radius);
    get_opt(l, "fov_y_deg", c.lrm.fov_y_deg);
    get_opt(l, "prune_threshold", c.lrm.prune_threshold);
  }
  if (j.contains("comp")) {
    const auto& m = j.at("comp");
    get_opt(m, "feature_dim", c.comp.feature_dim);
    get_opt(m, "sh_degree", c.comp.sh_degree);
    get_opt(m, "dim", c.comp.dim);
    get_opt(m, "heads", c.comp.heads);
    get_opt(m, "enc_layers", c.comp.enc_layers);
    get_opt(m, "dec_layers", c.comp.dec_layers);
    get_opt(m, "mlp_hidden", c.comp.mlp_hidden);
    get_opt(m, "grid_resolution", c.comp.grid_resolution);
    get_opt(m, "topk_fraction", c.comp.topk_fraction);
    if (m.contains("mode")) c.comp.mode = compress::distill_mode_from_string(m.at("mode").get<std::string>());
  }
  if (j.contains("ttt")) {
    const auto& t = j.at("ttt");
    get_opt(t, "dim", c.ttt.dim);
    get_opt(t, "fast_hidden", c.ttt.fast_hidden);
    get_opt(t, "mlp_hidden", c.ttt.mlp_hidden);
    get_opt(t, "layers", c.ttt.layers);
    get_opt(t, "heads", c.ttt.heads);
    if (t.contains("kind")) c.ttt.kind = ttt::layer_kind_from_string(t.at("kind").get<std::string>());
    get_opt(t, "inner_lr", c.ttt.muon.lr);
    get_opt(t, "inner_momentum", c.ttt.muon.momentum);
    get_opt(t, "inner_steps", c.ttt.muon.steps);
    get_opt(t, "ns_iters", c.ttt.muon.ns_iters);
    get_opt(t, "detach_inner", c.ttt.muon.detach_updates);
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage", c.stage},
           {"steps", c.steps},
           {"lr", c.lr},
           {"cosine", c.cosine},
           {"warmup", c.warmup},
           {"lambda_perc", c.lambda_perc},
           {"target_views", c.target_views},
           {"views_min", c.views_min},
           {"views_max", c.views_max},
           {"edit_mode", c.edit_mode},
           {"aux_weight", c.aux_weight},
           {"scenes", c.scenes},
           {"seed", c.seed},
           {"spacing", c.spacing},
           {"checkpoint_every", c.checkpoint_every},
           {"stop_at", c.stop_at},
           {"out_dir", c.out_dir},
           {"init_dir", c.init_dir},
           {"resume", c.resume},
           {"distill_mode", c.distill_mode},
           {"layer_kind", c.layer_kind},
           {"inner_steps", c.inner_steps},
           {"detach_inner", c.detach_inner}};
  if (c.model) j["model"] = *c.model;
}

void from_json(const json& j, TrainConfig& c) {
  static const std::unordered_set<std::string> known{
      "stage",    "steps",      "lr",         "cosine",           "warmup",  "lambda_perc", "target_views",
      "views_min", "views_max", "edit_mode",  "aux_weight",       "scenes",  "seed",        "spacing",
      "checkpoint_every", "stop_at", "out_dir", "init_dir", "resume", "distill_mode", "layer_kind",
      "inner_steps", "detach_inner", "model"};
  for (const auto& [k, v] : j.items()) {
    if (known.count(k) == 0) throw ContractError("unknown training option '" + k + "'");
  }
  get_opt(j, "stage", c.stage);
  get_opt(j, "steps", c.steps);
  get_opt(j, "lr", c.lr);
  get_opt(j, "cosine", c.cosine);
  get_opt(j, "warmup", c.warmup);
  get_opt(j, "lambda_perc", c.lambda_perc);
  get_opt(j, "target_views", c.target_views);
  get_opt(j, "views_min", c.views_min);
  get_opt(j, "views_max", c.views_max);
  get_opt(j, "edit_mode", c.edit_mode);
  get_opt(j, "aux_weight", c.aux_weight);
  get_opt(j, "scenes", c.scenes);
  get_opt(j, "seed", c.seed);
  get_opt(j, "spacing", c.spacing);
  get_opt(j, "checkpoint_every", c.checkpoint_every);
  get_opt(j, "stop_at", c.stop_at);
  get_opt(j, "out_dir", c.out_dir);
  get_opt(j, "init_dir", c.init_dir);
  get_opt(j, "resume", c.resume);
  get_opt(j, "distill_mode", c.distill_mode);
  get_opt(j, "layer_kind", c.layer_kind);
  get_opt(j, "inner_steps", c.inner_steps);
  get_opt(j, "detach_inner", c.detach_inner);
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (c.stage != "lrm" && c.stage != "stage1" && c.stage != "stage2") {
    throw ContractError("stage must be lrm, stage1 or stage2, got '" + c.stage + "'");
  }
  if (c.steps < 0 || c.target_views < 1 || c.views_min < 1 || c.views_max < c.views_min) {
    throw ContractError("invalid step or view counts in training config");
  }
  ttt::edit_mode_from_string(c.edit_mode);
}

TrainConfig load_train_config(const std::string& path) {
  return read_json(path).get<TrainConfig>();
}

ModelConfig model_config_for(const TrainConfig& cfg) {
  ModelConfig m = cfg.model.value_or(ModelConfig{});
  m.comp.mode = compress::distill_mode_from_string(cfg.distill_mode);
  m.ttt.kind = ttt::layer_kind_from_string(cfg.layer_kind);
  m.ttt.muon.steps = cfg.inner_steps;
  m.ttt.muon.detach_updates = cfg.detach_inner;
  return m;
}

// ---------------------------------------------------------------------------
// Models

Models::Models(const ModelConfig& cfg, std::uint64_t seed) : config(cfg), rng_(seed) {
  config.validate();
  lrm_ = std::make_unique<lrm::FeatureLrm>(config.lrm, store, rng_);
  comp_ = std::make_unique<compress::Compressor>(config.comp, store, rng_);
  refiner_ = std::make_unique<ttt::Refiner>(config.ttt, store, rng_);
}

void Models::save(const std::string& dir) const {
  fs::create_directories(dir);
  write_json(fs::path(dir) / kModelJson, json(config));
  store.save((fs::path(dir) / kParams).string());
}

bool has_checkpoint(const std::string& dir) {
  return fs::is_regular_file(fs::path(dir) / kModelJson) && fs::is_regular_file(fs::path(dir) / kParams);
}

std::unique_ptr<Models> Models::load(const std::string& dir) {
  for (const char* f : {kModelJson, kParams}) {
    const auto p = fs::path(dir) / f;
    if (!fs::is_regular_file(p)) throw Error("checkpoint file not found: " + p.string());
  }
  auto m = std::make_unique<Models>(read_json(fs::path(dir) / kModelJson).get<ModelConfig>());
  m->store.load((fs::path(dir) / kParams).string());
  return m;
}

void Models::load_params(const std::string& dir, const std::string& prefix) {
  const auto p = fs::path(dir) / kParams;
  if (!fs::is_regular_file(p)) throw Error("checkpoint file not found: " + p.string());
  store.load(p.string(), prefix);
}

// ---------------------------------------------------------------------------
// Data

SceneSet SceneSet::generate(int count, std::uint64_t seed, const lrm::LrmConfig& lrm, double spacing) {
  SceneSet set;
  const auto cams = splat::canonical_cameras({0.0, 0.0, 0.0}, lrm.camera_radius, lrm.image_size, lrm.image_size,
                                             lrm.fov_y_deg);
  for (int i = 0; i < count; ++i) {
    Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(i));
    const auto spec = splat::random_synth_spec(rng, lrm.sh_degree, spacing);
    SceneItem item;
    item.scene = splat::synth_scene(spec, rng.next_u64());
    item.input_renders = raster::render_views(item.scene, cams);
    for (std::size_t v = 0; v < cams.size(); ++v) {
      lrm::View view;
      view.camera = cams[v];
      view.image = io::Image(lrm.image_size, lrm.image_size, 3);
      view.image.data = item.input_renders[v].color;
      item.inputs.push_back(std::move(view));
    }
    set.items.push_back(std::move(item));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Checkpointer {
  fs::path dir;
  const Models& models;

  void save(const nn::AdamW& opt, int next_step, const std::vector<double>& losses, const TrainConfig& cfg) const {
    if (dir.empty()) return;
    models.save(dir.string());
    ad::save_checkpoint((dir / kOptim).string(), opt.state());
    write_json(dir / kState, json{{"step", next_step}, {"stage", cfg.stage}, {"losses", losses}});
  }
};

}  // namespace

TrainResult run_training(Models& models, const std::string& prefix, const TrainConfig& cfg, const LossFn& loss) {
  auto& store = models.store;
  store.set_trainable("", false);
  store.set_trainable(prefix, true);
  const auto params = store.parameters(prefix);
  if (params.empty()) throw ContractError("no parameters under '" + prefix + "'");
  nn::AdamW opt(params);
  const Checkpointer ckpt{cfg.out_dir.empty() ? fs::path() : fs::path(cfg.out_dir), models};

  TrainResult result;
  std::vector<double> history;
  if (cfg.resume && !cfg.out_dir.empty() && fs::is_regular_file(ckpt.dir / kState)) {
    const auto state = read_json(ckpt.dir / kState);
    models.load_params(cfg.out_dir, "");
    opt.load_state(ad::load_checkpoint((ckpt.dir / kOptim).string()));
    result.first_step = state.at("step").get<int>();
    history = state.at("losses").get<std::vector<double>>();
    spdlog::info("resuming {} from step {}", cfg.stage, result.first_step);
  }
  const std::uint64_t frozen = frozen_fingerprint(store, prefix);
  result.frozen_fingerprint = frozen;

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    const auto path = ckpt.dir / kLog;
    const bool fresh = result.first_step == 0 || !fs::exists(path);
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) csv << "step,loss,lr,grad_norm,seconds\n";
  }

  auto good = store.state(prefix);
  auto good_opt = opt.state();
  const auto restore = [&](const std::string& why, int step) {
    store.load_state(good, prefix);
    opt.load_state(good_opt);
    throw DivergenceError(why + " at step " + std::to_string(step) + "; parameters restored to the last checkpoint");
  };

  const int end = cfg.stop_at >= 0 ? std::min(cfg.stop_at, cfg.steps) : cfg.steps;
  for (int step = result.first_step; step < end; ++step) {
    const auto t0 = Clock::now();
    Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(step) + 1);
    ad::TapeF tape;
    const auto l = loss(tape, step, rng);
    const double value = l.value()[0];
    if (!std::isfinite(value)) restore("non-finite loss", step);
    store.zero_grad(prefix);
    tape.backward(l);
    const double lr = cfg.cosine ? nn::cosine_lr(cfg.lr, step, cfg.steps, cfg.warmup, 0.1) : cfg.lr;
    double gnorm = 0;
    try {
      gnorm = opt.step(lr);
    } catch (const Error& e) {
      restore(e.what(), step);
    }
    result.losses.push_back(value);
    history.push_back(value);
    const double secs = seconds_since(t0);
    if (csv) csv << step << ',' << std::setprecision(9) << value << ',' << lr << ',' << gnorm << ',' << secs << '\n';
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      ckpt.save(opt, step + 1, history, cfg);
      good = store.state(prefix);
      good_opt = opt.state();
    }
  }
  ckpt.save(opt, end, history, cfg);
  store.set_trainable("", true);
  if (frozen_fingerprint(store, prefix) != frozen) throw Error("frozen parameters changed during training");
  return result;
}

// ---------------------------------------------------------------------------
// Stages

TrainResult train_lrm(Models& models, const SceneSet& data, const TrainConfig& cfg) {
  if (data.items.empty()) throw ContractError("no training scenes");
  const auto& lrm = models.lrm();
  const auto& lc = lrm.config();
  const int s = lc.image_size;
  return run_training(models, "lrm.", cfg, [&](ad::TapeF& tape, int, Rng& rng) {
    const auto& item = data.items[rng.below(data.items.size())];
    const auto ctx = lrm.backbone(tape, lrm.tokenize(tape, item.inputs));
    const auto px = lrm.decode(tape, ctx, item.inputs);
    auto total = render_loss(tape, px.splats, item.scene, random_targets(rng, cfg.target_views, lc), cfg.lambda_perc);
    if (cfg.aux_weight <= 0) return total;

    // Opacity against the input alpha; ray depth where the input is solid.
    const std::int64_t n = static_cast<std::int64_t>(px.pixel_of.size());
    ad::TensorF alpha(ad::Shape{n, 1}), depth(ad::Shape{n, 1}), mask(ad::Shape{n, 1});
    double solid = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t pix = px.pixel_of[static_cast<std::size_t>(i)];
      const auto v = static_cast<std::size_t>(pix / (s * s));
      const std::int64_t local = pix % (s * s);
      const auto& r = item.input_renders[v];
      const auto& cam = item.inputs[v].camera;
      const double u = static_cast<double>(local % s) + 0.5, w = static_cast<double>(local / s) + 0.5;
      const double stretch = std::sqrt(std::pow((u - cam.cx) / cam.fx, 2) + std::pow((w - cam.cy) / cam.fy, 2) + 1.0);
      const float a = r.alpha[static_cast<std::size_t>(local)];
      alpha[i] = a;
      depth[i] = static_cast<float>(r.depth[static_cast<std::size_t>(local)] * stretch);
      mask[i] = a > 0.5f ? 1.f : 0.f;
      solid += mask[i];
    }
    const auto opacity = ad::sigmoid(px.splats.opacity_logits);
    auto aux = ad::mse(opacity, tape.leaf(std::move(alpha), false));
    if (solid > 0) {
      const auto diff = ad::mul(ad::sub(px.depth, tape.leaf(std::move(depth), false)), tape.leaf(std::move(mask), false));
      aux = ad::add(aux, ad::scale(ad::sum(ad::square(diff)), static_cast<float>(1.0 / solid)));
    }
    return ad::add(total, ad::scale(aux, static_cast<float>(cfg.aux_weight)));
  });
}

std::vector<lrm::FeatureGaussians> lrm_features(const Models& models, const SceneSet& data) {
  std::vector<lrm::FeatureGaussians> out;
  out.reserve(data.items.size());
  for (const auto& item : data.items) {
    auto fg = models.lrm().reconstruct(item.inputs).pruned(models.lrm().config().prune_threshold);
    if (fg.size() == 0) throw ContractError("reconstruction kept no Gaussians above the opacity threshold");
    out.push_back(std::move(fg));
  }
  return out;
}

TrainResult train_stage1(Models& models, const SceneSet& data, const std::vector<lrm::FeatureGaussians>& features,
                         const TrainConfig& cfg) {
  if (features.size() != data.items.size() || features.empty()) {
    throw ContractError("one feature set per training scene is required");
  }
  const auto& comp = models.comp();
  std::vector<ad::TensorF> feats;
  std::vector<voxel::VoxelGrid> grids;
  for (const auto& fg : features) {
    feats.push_back(fg.features());
    grids.push_back(voxel::voxelize(fg.gaussians, feats.back(), comp.config().grid_resolution, comp.config().bounds));
  }
  return run_training(models, "comp.", cfg, [&](ad::TapeF& tape, int, Rng& rng) {
    const auto i = rng.below(data.items.size());
    const auto out = comp.forward(tape, grids[i], feats[i], features[i].gaussians);
    return render_loss(tape, out.splats, data.items[i].scene, random_targets(rng, cfg.target_views, models.lrm().config()),
                       cfg.lambda_perc);
  });
}

std::vector<compress::VoxelLatents> stage1_latents(const Models& models,
                                                   const std::vector<lrm::FeatureGaussians>& features) {
  std::vector<compress::VoxelLatents> out;
  out.reserve(features.size());
  for (const auto& fg : features) out.push_back(models.comp().compress(fg));
  return out;
}

EditTaskSample make_task(const SceneItem& item, const std::string& edit_mode, int views, int targets, Rng& rng,
                         const lrm::LrmConfig& lrm) {
  TaskConfig tc;
  tc.image_size = lrm.image_size;
  tc.camera_radius = lrm.camera_radius;
  tc.fov_y_deg = lrm.fov_y_deg;
  if (ttt::edit_mode_from_string(edit_mode) == ttt::EditMode::kGlobal) {
    return make_recolor_sample(item.scene, views, targets, rng, tc);
  }
  return make_graffiti_sample(item.scene, views, rng, tc);
}

ad::VarF stage2_loss(ad::TapeF& tape, const Models& models, const compress::VoxelLatents& base,
                     const EditTaskSample& task, double lambda_perc) {
  const auto& comp = models.comp();
  const auto& refiner = models.refiner();
  const auto tokens = tape.leaf(models.lrm().encode_views(views_of(task.edits)).tokens, false);
  const auto latents = tape.leaf(base.latents, false);
  const auto row_cells = base.row_cells();
  const auto grid = voxel::make_grid(base.bounds, base.resolution);

  raster::SplatVars<float> splats;
  if (task.mode == ttt::EditMode::kGlobal) {
    const auto out = refiner.forward(tape, tokens, latents, refiner.initial(tape));
    splats = comp.gs_decode(tape, out.latents, row_cells, grid);
  } else {
    const auto editor = models.editor();
    const auto session = editor.start(base);
    const auto hits = editor.hit_voxels(session, task.edits);
    const auto rows = rows_in(row_cells, hits);
    if (rows.empty()) throw ContractError("local edit views hit no voxels");
    const auto out = refiner.forward(tape, tokens, latents, refiner.initial(tape), &rows);
    const auto refined = ad::gather_rows(out.latents, rows);
    const auto fast = refiner.config().kind == ttt::LayerKind::kTtt ? refiner.merge_initial(tape) : ttt::FastVars<float>{};
    const auto merged = refiner.merge(tape, tokens, ad::gather_rows(latents, rows), fast);

    std::vector<std::int64_t> keep;
    std::vector<voxel::CellId> cells;
    const std::unordered_set<std::int64_t> hit_rows(rows.begin(), rows.end());
    for (std::int64_t r = 0; r < base.rows(); ++r) {
      if (hit_rows.count(r) == 0) {
        keep.push_back(r);
        cells.push_back(row_cells[static_cast<std::size_t>(r)]);
      }
    }
    std::vector<ad::VarF> parts;
    if (!keep.empty()) parts.push_back(ad::gather_rows(latents, keep));
    parts.push_back(merged.latents);
    parts.push_back(refined);
    for (int rep = 0; rep < 2; ++rep) {
      for (auto r : rows) cells.push_back(row_cells[static_cast<std::size_t>(r)]);
    }
    splats = comp.gs_decode(tape, ad::concat_rows<float>(parts), cells, grid);
  }

  std::vector<ad::VarF> terms;
  for (std::size_t t = 0; t < task.targets.size(); ++t) {
    const auto& cam = task.targets[t];
    const auto pred = raster::render_var(splats, cam);
    terms.push_back(recon_loss(pred, image_leaf(tape, task.target_images[t].data, cam.width, cam.height), lambda_perc));
  }
  auto total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.f / static_cast<float>(terms.size()));
}

TrainResult train_stage2(Models& models, const SceneSet& data, const std::vector<compress::VoxelLatents>& latents,
                         const TrainConfig& cfg) {
  if (latents.size() != data.items.size() || latents.empty()) {
    throw ContractError("one latent set per training scene is required");
  }
  const auto& lc = models.lrm().config();
  return run_training(models, "ttt.", cfg, [&](ad::TapeF& tape, int, Rng& rng) {
    // Local samples whose strokes miss every occupied voxel are redrawn.
    for (int attempt = 0;; ++attempt) {
      const auto i = rng.below(data.items.size());
      const int views = cfg.views_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.views_max - cfg.views_min + 1)));
      const auto task = make_task(data.items[i], cfg.edit_mode, views, cfg.target_views, rng, lc);
      try {
        return stage2_loss(tape, models, latents[i], task, cfg.lambda_perc);
      } catch (const ContractError&) {
        if (task.mode != ttt::EditMode::kLocal || attempt >= 8) throw;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Evaluation

Stage1Metrics eval_stage1(const Models& models, const SceneSet& data, int views, std::uint64_t seed) {
  Stage1Metrics m;
  m.views = views;
  double total_seconds = 0;
  int images = 0;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    const auto t0 = Clock::now();
    const auto asset = compress::compress_asset(item.scene, models.lrm(), models.comp());
    total_seconds += seconds_since(t0);
    const auto decoded = models.comp().decode(asset.latents);
    Rng rng = Rng(seed).fork(i + 1);
    for (const auto& cam : random_targets(rng, views, models.lrm().config())) {
      const auto gt = to_image(raster::rasterize(item.scene, cam).color, cam.width, cam.height);
      const auto a = to_image(raster::rasterize(asset.source.gaussians, cam).color, cam.width, cam.height);
      const auto b = to_image(raster::rasterize(decoded, cam).color, cam.width, cam.height);
      m.psnr_lrm += psnr(a, gt);
      m.psnr_comp += psnr(b, gt);
      m.ssim_lrm += ssim(a, gt);
      m.ssim_comp += ssim(b, gt);
      ++images;
    }
    ++m.scenes;
  }
  if (images > 0) {
    m.psnr_lrm /= images;
    m.psnr_comp /= images;
    m.ssim_lrm /= images;
    m.ssim_comp /= images;
  }
  if (m.scenes > 0) m.seconds_per_asset = total_seconds / m.scenes;
  return m;
}

Stage2Metrics eval_stage2(const Models& models, const SceneSet& data, const std::vector<compress::VoxelLatents>& latents,
                          const std::string& task, const std::vector<int>& view_counts, std::uint64_t seed) {
  if (latents.size() != data.items.size()) throw ContractError("one latent set per evaluation scene is required");
  if (task != "recolor" && task != "graffiti") throw ContractError("unknown evaluation task '" + task + "'");
  const bool global = task == "recolor";
  const auto& lc = models.lrm().config();
  const auto editor = models.editor();
  Stage2Metrics m;
  m.task = task;
  m.view_counts = view_counts;
  m.psnr.assign(view_counts.size(), 0.0);
  m.ssim.assign(view_counts.size(), 0.0);
  m.targets_per_sample = global ? 8 : 2;
  double edit_seconds = 0, baseline = 0;
  int edits = 0, baseline_images = 0;
  std::vector<int> images(view_counts.size(), 0);

  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto base_scene = models.comp().decode(latents[i]);
    for (std::size_t c = 0; c < view_counts.size(); ++c) {
      Rng rng = Rng(seed).fork(i * 64 + c + 1);
      const auto sample = make_task(data.items[i], global ? "global" : "local", view_counts[c], 8, rng, lc);
      auto session = editor.start(latents[i]);
      const auto t0 = Clock::now();
      editor.refine(session, sample.edits, sample.mode);
      edit_seconds += seconds_since(t0);
      ++edits;
      for (std::size_t t = 0; t < sample.targets.size(); ++t) {
        const auto& cam = sample.targets[t];
        const auto pred = to_image(raster::rasterize(session.scene, cam).color, cam.width, cam.height);
        m.psnr[c] += psnr(pred, sample.target_images[t]);
        m.ssim[c] += ssim(pred, sample.target_images[t]);
        ++images[c];
        const auto unedited = to_image(raster::rasterize(base_scene, cam).color, cam.width, cam.height);
        baseline += psnr(unedited, sample.target_images[t]);
        ++baseline_images;
      }
    }
    ++m.samples;
  }
  for (std::size_t c = 0; c < view_counts.size(); ++c) {
    if (images[c] > 0) {
      m.psnr[c] /= images[c];
      m.ssim[c] /= images[c];
    }
  }
  if (baseline_images > 0) m.baseline_psnr = baseline / baseline_images;
  if (edits > 0) m.seconds_per_edit = edit_seconds / edits;
  return m;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  if (stage1.scenes > 0) {
    os << "stage1 (" << stage1.scenes << " scenes x " << stage1.views << " views)\n"
       << "  lrm         psnr " << stage1.psnr_lrm << "  ssim " << std::setprecision(4) << stage1.ssim_lrm
       << std::setprecision(2) << "\n"
       << "  compressed  psnr " << stage1.psnr_comp << "  ssim " << std::setprecision(4) << stage1.ssim_comp
       << std::setprecision(2) << "\n"
       << "  seconds/asset " << std::setprecision(3) << stage1.seconds_per_asset << std::setprecision(2) << "\n";
  }
  for (const auto& s : stage2) {
    os << s.task << " (" << s.samples << " samples, " << s.targets_per_sample << " targets each)\n"
       << "  unedited    psnr " << s.baseline_psnr << "\n";
    for (std::size_t c = 0; c < s.view_counts.size(); ++c) {
      os << "  " << s.view_counts[c] << " view" << (s.view_counts[c] == 1 ? " " : "s") << "     psnr " << s.psnr[c]
         << "  ssim " << std::setprecision(4) << s.ssim[c] << std::setprecision(2) << "\n";
    }
    os << "  seconds/edit " << std::setprecision(3) << s.seconds_per_edit << std::setprecision(2) << "\n";
  }
  if (!ablation.empty()) {
    os << "ablation\n";
    for (const auto& r : ablation) {
      os << "  " << std::left << std::setw(9) << r.group << std::setw(18) << r.name << std::right << "psnr " << r.psnr
         << "  ssim " << std::setprecision(4) << r.ssim << std::setprecision(2) << "\n";
    }
  }
  return os.str();
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "section,name,views,psnr,ssim\n" << std::setprecision(6);
  if (stage1.scenes > 0) {
    out << "stage1,lrm," << stage1.views << ',' << stage1.psnr_lrm << ',' << stage1.ssim_lrm << '\n';
    out << "stage1,compressed," << stage1.views << ',' << stage1.psnr_comp << ',' << stage1.ssim_comp << '\n';
  }
  for (const auto& s : stage2) {
    out << s.task << ",unedited,0," << s.baseline_psnr << ",\n";
    for (std::size_t c = 0; c < s.view_counts.size(); ++c) {
      out << s.task << ",edited," << s.view_counts[c] << ',' << s.psnr[c] << ',' << s.ssim[c] << '\n';
    }
  }
  for (const auto& r : ablation) out << "ablation-" << r.group << ',' << r.name << ",," << r.psnr << ',' << r.ssim << '\n';
}

std::size_t EvalReport::csv_rows() const {
  std::size_t n = stage1.scenes > 0 ? 2 : 0;
  for (const auto& s : stage2) n += 1 + s.view_counts.size();
  return n + ablation.size();
}

// ---------------------------------------------------------------------------
// Config-driven entry points

TrainResult run_stage(const TrainConfig& cfg) {
  if (cfg.stage == "lrm") {
    const auto data = SceneSet::generate(cfg.scenes, cfg.seed, model_config_for(cfg).lrm, cfg.spacing);
    Models m(model_config_for(cfg), cfg.seed);
    if (!cfg.init_dir.empty()) m.load_params(cfg.init_dir, "lrm.");
    auto r = train_lrm(m, data, cfg);
    if (cfg.out_dir.empty()) spdlog::warn("no out_dir configured; the trained LRM is discarded");
    return r;
  }
  if (cfg.init_dir.empty()) throw Error("stage " + cfg.stage + " needs init_dir with a trained checkpoint");
  const auto init = Models::load(cfg.init_dir);
  ModelConfig mc = init->config;
  const auto overrides = model_config_for(cfg);
  if (cfg.stage == "stage1") {
    mc.comp.mode = overrides.comp.mode;
  } else {
    mc.ttt.kind = overrides.ttt.kind;
    mc.ttt.muon.steps = overrides.ttt.muon.steps;
    mc.ttt.muon.detach_updates = overrides.ttt.muon.detach_updates;
  }
  Models m(mc, cfg.seed);
  m.load_params(cfg.init_dir, "lrm.");
  const auto data = SceneSet::generate(cfg.scenes, cfg.seed, mc.lrm, cfg.spacing);
  const auto features = lrm_features(m, data);
  if (cfg.stage == "stage1") return train_stage1(m, data, features, cfg);
  m.load_params(cfg.init_dir, "comp.");
  return train_stage2(m, data, stage1_latents(m, features), cfg);
}

void from_json(const json& j, EvalSpec& s) {
  static const std::unordered_set<std::string> known{"checkpoint", "scenes",     "seed",     "spacing",
                                                     "stage1_views", "tasks",    "task_checkpoints",
                                                     "view_counts", "ablation", "csv",      "grid_png"};
  for (const auto& [k, v] : j.items()) {
    if (known.count(k) == 0) throw ContractError("unknown evaluation option '" + k + "'");
  }
  get_opt(j, "checkpoint", s.checkpoint);
  get_opt(j, "scenes", s.scenes);
  get_opt(j, "seed", s.seed);
  get_opt(j, "spacing", s.spacing);
  get_opt(j, "stage1_views", s.stage1_views);
  get_opt(j, "tasks", s.tasks);
  get_opt(j, "task_checkpoints", s.task_checkpoints);
  get_opt(j, "view_counts", s.view_counts);
  get_opt(j, "csv", s.csv);
  get_opt(j, "grid_png", s.grid_png);
  if (j.contains("ablation")) {
    for (const auto& a : j.at("ablation")) {
      EvalAblation e{a.at("group").get<std::string>(), a.at("name").get<std::string>(),
                     a.at("checkpoint").get<std::string>()};
      if (e.group != "distill" && e.group != "refiner") throw ContractError("ablation group must be distill or refiner");
      s.ablation.push_back(std::move(e));
    }
  }
  if (s.checkpoint.empty()) throw ContractError("evaluation needs a checkpoint");
  if (s.scenes < 1 || s.stage1_views < 1 || s.view_counts.empty()) throw ContractError("invalid evaluation sizes");
}

EvalSpec load_eval_spec(const std::string& path) {
  return read_json(path).get<EvalSpec>();
}

namespace {

void write_grid(const std::string& path, const Models& models, const SceneSet& data, std::uint64_t seed) {
  const int s = models.lrm().config().image_size;
  const int rows = static_cast<int>(std::min<std::size_t>(4, data.items.size()));
  io::Image grid(3 * s, rows * s, 3);
  for (int r = 0; r < rows; ++r) {
    const auto& item = data.items[static_cast<std::size_t>(r)];
    const auto asset = compress::compress_asset(item.scene, models.lrm(), models.comp());
    Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(r) + 1);
    const auto cam = random_targets(rng, 1, models.lrm().config()).front();
    const std::array<splat::SplatScene, 3> scenes{item.scene, asset.source.gaussians, models.comp().decode(asset.latents)};
    for (int c = 0; c < 3; ++c) {
      const auto img = raster::rasterize(scenes[static_cast<std::size_t>(c)], cam).color;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          for (int ch = 0; ch < 3; ++ch) grid.at(c * s + x, r * s + y, ch) = img[(static_cast<std::size_t>(y) * s + x) * 3 + ch];
    }
  }
  io::save_png(path, grid);
}

}  // namespace

EvalReport run_eval_suite(const EvalSpec& spec) {
  EvalReport report;
  const auto models = Models::load(spec.checkpoint);
  const auto data = SceneSet::generate(spec.scenes, spec.seed, models->config.lrm, spec.spacing);
  report.stage1 = eval_stage1(*models, data, spec.stage1_views, spec.seed);
  if (!spec.grid_png.empty()) write_grid(spec.grid_png, *models, data, spec.seed);

  const auto task_metrics = [&](const Models& m, const std::string& task) {
    const auto latents = stage1_latents(m, lrm_features(m, data));
    return eval_stage2(m, data, latents, task, spec.view_counts, spec.seed);
  };
  for (const auto& task : spec.tasks) {
    const auto it = spec.task_checkpoints.find(task);
    if (it == spec.task_checkpoints.end()) {
      report.stage2.push_back(task_metrics(*models, task));
    } else {
      report.stage2.push_back(task_metrics(*Models::load(it->second), task));
    }
  }
  for (const auto& a : spec.ablation) {
    const auto m = Models::load(a.checkpoint);
    AblationRow row{a.group, a.name, 0, 0};
    if (a.group == "distill") {
      const auto s1 = eval_stage1(*m, data, spec.stage1_views, spec.seed);
      row.psnr = s1.psnr_comp;
      row.ssim = s1.ssim_comp;
    } else {
      const auto s2 = task_metrics(*m, "recolor");
      for (std::size_t c = 0; c < s2.psnr.size(); ++c) {
        row.psnr += s2.psnr[c] / static_cast<double>(s2.psnr.size());
        row.ssim += s2.ssim[c] / static_cast<double>(s2.ssim.size());
      }
    }
    report.ablation.push_back(row);
  }
  if (!spec.csv.empty()) report.write_csv(spec.csv);
  return report;
}

}  // namespace splatedit::train
