// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "splatedit/compress/compressor.hpp"
#include "splatedit/lrm/feature_lrm.hpp"
#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/train/tasks.hpp"
#include "splatedit/ttt/refiner.hpp"
#include "splatedit/ttt/session.hpp"

namespace splatedit::train {

struct ModelConfig {
  lrm::LrmConfig lrm;
  compress::CompressorConfig comp;
  ttt::TttConfig ttt;

  /// Widths agree across modules; ContractError otherwise.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// All learned modules in one parameter store.
class Models {
 public:
  explicit Models(const ModelConfig& cfg, std::uint64_t seed = 0);
  Models(const Models&) = delete;
  Models& operator=(const Models&) = delete;

  const ModelConfig config;
  nn::ParamStore store;

  const lrm::FeatureLrm& lrm() const { return *lrm_; }
  const compress::Compressor& comp() const { return *comp_; }
  const ttt::Refiner& refiner() const { return *refiner_; }
  ttt::Editor editor() const { return {*lrm_, *comp_, *refiner_}; }

  /// `dir`/model.json and `dir`/params.ckpt.
  void save(const std::string& dir) const;
  /// Error naming the missing file when `dir` holds no checkpoint.
  static std::unique_ptr<Models> load(const std::string& dir);
  /// Copies parameters under `prefix` from a checkpoint directory.
  void load_params(const std::string& dir, const std::string& prefix);

 private:
  Rng rng_;
  std::unique_ptr<lrm::FeatureLrm> lrm_;
  std::unique_ptr<compress::Compressor> comp_;
  std::unique_ptr<ttt::Refiner> refiner_;
};

bool has_checkpoint(const std::string& dir);

/// A synthetic object with its input-rig renders.
struct SceneItem {
  splat::SplatScene scene;
  std::vector<lrm::View> inputs;
  std::vector<raster::RenderOutput<float>> input_renders;  // alpha and depth for auxiliary losses
};

struct SceneSet {
  std::vector<SceneItem> items;
  /// Scene i uses seed `seed * 1000003 + i`; SH degree and image size from `lrm`.
  static SceneSet generate(int count, std::uint64_t seed, const lrm::LrmConfig& lrm, double spacing = 0.06);
};

struct TrainConfig {
  std::string stage = "stage1";  // lrm | stage1 | stage2
  int steps = 200;
  double lr = 1e-3;
  bool cosine = true;
  int warmup = 10;
  double lambda_perc = 0.5;
  int target_views = 2;  // rendered per step
  int views_min = 1;     // stage 2 edit views
  int views_max = 4;
  std::string edit_mode = "global";  // stage 2 task: global recolor or local graffiti
  double aux_weight = 1.0;           // LRM opacity/depth supervision
  int scenes = 200;
  std::uint64_t seed = 1;
  double spacing = 0.06;
  int checkpoint_every = 0;  // 0: only at the end
  int stop_at = -1;          // stop before this step (simulated interruption); -1 runs to the end
  std::string out_dir;       // empty: no files written
  std::string init_dir;      // checkpoint providing the frozen modules
  bool resume = false;
  /// Model overrides applied on top of the desk defaults.
  std::string distill_mode = "feats-query";
  std::string layer_kind = "ttt";
  int inner_steps = 5;
  bool detach_inner = false;
  /// Full model configuration for a fresh LRM stage; later stages inherit
  /// the configuration stored with init_dir.
  std::optional<ModelConfig> model;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);
/// Desk model configuration with the overrides in `cfg` applied.
ModelConfig model_config_for(const TrainConfig& cfg);

/// Raised when a loss or gradient turns non-finite; parameters are restored
/// to the last checkpoint first (or to the start of training).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  std::vector<double> losses;  // per step
  int first_step = 0;
  std::uint64_t frozen_fingerprint = 0;
};

/// One optimisation step's loss for `step`; all randomness must come from `rng`.
using LossFn = std::function<ad::VarF(ad::TapeF& tape, int step, Rng& rng)>;

/// AdamW with cosine decay on parameters under `prefix`; everything else is
/// frozen and checked bit-equal afterwards. Writes params, optimiser state
/// and a CSV log under cfg.out_dir when set, and resumes from there when
/// cfg.resume is true.
TrainResult run_training(Models& models, const std::string& prefix, const TrainConfig& cfg, const LossFn& loss);

/// Per-pixel LRM training with render, opacity and depth losses.
TrainResult train_lrm(Models& models, const SceneSet& data, const TrainConfig& cfg);

/// Pruned LRM Gaussians with features for every scene (frozen LRM).
std::vector<lrm::FeatureGaussians> lrm_features(const Models& models, const SceneSet& data);
TrainResult train_stage1(Models& models, const SceneSet& data, const std::vector<lrm::FeatureGaussians>& features,
                         const TrainConfig& cfg);

/// Stage I latents for every scene.
std::vector<compress::VoxelLatents> stage1_latents(const Models& models,
                                                   const std::vector<lrm::FeatureGaussians>& features);
EditTaskSample make_task(const SceneItem& item, const std::string& edit_mode, int views, int targets, Rng& rng,
                         const lrm::LrmConfig& lrm);
TrainResult train_stage2(Models& models, const SceneSet& data, const std::vector<compress::VoxelLatents>& latents,
                         const TrainConfig& cfg);

/// Differentiable render of an edited session: latents through the refiner,
/// decoded and rendered at the task's targets. Returns the summed loss.
ad::VarF stage2_loss(ad::TapeF& tape, const Models& models, const compress::VoxelLatents& base,
                     const EditTaskSample& task, double lambda_perc);

// ---------------------------------------------------------------------------
// Evaluation

struct Stage1Metrics {
  double psnr_lrm = 0, psnr_comp = 0, ssim_lrm = 0, ssim_comp = 0;
  int scenes = 0, views = 0;
  double seconds_per_asset = 0;
};
/// Pre- and post-compression renders against ground truth at `views` random
/// novel cameras per scene.
Stage1Metrics eval_stage1(const Models& models, const SceneSet& data, int views, std::uint64_t seed);

struct Stage2Metrics {
  std::string task;                // recolor | graffiti
  double baseline_psnr = 0;        // unedited Stage I render
  std::vector<int> view_counts;
  std::vector<double> psnr, ssim;  // per view count
  int targets_per_sample = 0;
  int samples = 0;
  double seconds_per_edit = 0;
};
/// Recolor: 8 novel views per sample. Graffiti: 2 novel views per zoom view.
Stage2Metrics eval_stage2(const Models& models, const SceneSet& data, const std::vector<compress::VoxelLatents>& latents,
                          const std::string& task, const std::vector<int>& view_counts, std::uint64_t seed);

struct AblationRow {
  std::string group;  // distill | refiner
  std::string name;
  double psnr = 0, ssim = 0;
};

struct EvalReport {
  Stage1Metrics stage1;
  std::vector<Stage2Metrics> stage2;
  std::vector<AblationRow> ablation;
  std::string table() const;
  /// One row per ablation entry plus one per stage-2 view count.
  void write_csv(const std::string& path) const;
  std::size_t csv_rows() const;
};

/// Runs one configured stage end to end: generates the training scenes,
/// builds or loads models (init_dir supplies the frozen modules; Error when
/// it holds no checkpoint), trains and writes the checkpoint to out_dir.
TrainResult run_stage(const TrainConfig& cfg);

struct EvalAblation {
  std::string group;  // distill: Stage I PSNR; refiner: mean recolor PSNR over view counts
  std::string name;
  std::string checkpoint;
};

struct EvalSpec {
  std::string checkpoint;  // stage 1 metrics and default for tasks
  int scenes = 50;
  std::uint64_t seed = 2;
  double spacing = 0.06;
  int stage1_views = 4;
  std::vector<std::string> tasks{"recolor", "graffiti"};
  std::map<std::string, std::string> task_checkpoints;  // task -> checkpoint dir
  std::vector<int> view_counts{1, 2, 4};
  std::vector<EvalAblation> ablation;
  std::string csv;       // written when set
  std::string grid_png;  // ground truth | LRM | compressed for the first scenes
};

void from_json(const nlohmann::json& j, EvalSpec& s);
EvalSpec load_eval_spec(const std::string& path);
EvalReport run_eval_suite(const EvalSpec& spec);

}  // namespace splatedit::train
