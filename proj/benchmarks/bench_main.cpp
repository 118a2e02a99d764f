// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "splatedit/raster/rasterizer.hpp"
#include "splatedit/splat/synth.hpp"
#include "splatedit/train/tasks.hpp"
#include "splatedit/train/trainer.hpp"
#include "splatedit/ttt/muon.hpp"

namespace splatedit {
namespace {

splat::SplatScene bench_scene(double spacing) {
  Rng rng(17);
  return splat::synth_scene(splat::random_synth_spec(rng, 1, spacing), 5);
}

void BM_RasterForward(benchmark::State& state) {
  const auto scene = bench_scene(0.01 * static_cast<double>(state.range(0)));
  const auto cam = splat::orbit_camera({0, 0, 0}, 3.0, 30.0, 20.0, 128, 128);
  for (auto _ : state) benchmark::DoNotOptimize(raster::rasterize(scene, cam));
  state.counters["gaussians"] = static_cast<double>(scene.size());
}
BENCHMARK(BM_RasterForward)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_RasterBackward(benchmark::State& state) {
  const auto scene = bench_scene(0.03);
  const auto cam = splat::orbit_camera({0, 0, 0}, 3.0, 30.0, 20.0, 128, 128);
  const auto view = raster::view_of(scene);
  raster::Rasterizer<float> r;
  const auto out = r.forward(view, cam);
  const std::vector<float> grad(out.color.size(), 1e-3f);
  for (auto _ : state) benchmark::DoNotOptimize(r.backward(grad));
  state.counters["gaussians"] = static_cast<double>(scene.size());
}
BENCHMARK(BM_RasterBackward)->Unit(benchmark::kMillisecond);

void BM_PackedAttention(benchmark::State& state) {
  // One group per voxel, as in the compressor encoder.
  const std::int64_t groups = state.range(0), per = 8, dim = 64;
  Rng rng(3);
  std::vector<std::int64_t> lengths(static_cast<std::size_t>(groups), per);
  const auto off = ad::offsets_from_lengths(lengths);
  ad::TensorF x(ad::Shape{groups * per, dim});
  for (auto& v : x.storage()) v = static_cast<float>(rng.normal());
  for (auto _ : state) {
    ad::TapeF tape;
    tape.set_grad_enabled(false);
    const auto c = tape.constant(x);
    benchmark::DoNotOptimize(ad::packed_attention(c, c, c, off, off, 4));
  }
}
BENCHMARK(BM_PackedAttention)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_NewtonSchulz(benchmark::State& state) {
  Rng rng(4);
  ad::TensorD m(ad::Shape{64, 128});
  for (auto& v : m.storage()) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(ttt::newton_schulz_orth(m, 5));
}
BENCHMARK(BM_NewtonSchulz)->Unit(benchmark::kMicrosecond);

// Untrained default-size models: timings do not depend on the weights.
struct EditRig {
  train::Models models{train::ModelConfig{}, 1};
  splat::SplatScene scene = bench_scene(0.06);
  compress::VoxelLatents base = compress::compress_asset(scene, models.lrm(), models.comp()).latents;
};

EditRig& rig() {
  static EditRig r;
  return r;
}

void BM_CompressAsset(benchmark::State& state) {
  auto& r = rig();
  for (auto _ : state) benchmark::DoNotOptimize(compress::compress_asset(r.scene, r.models.lrm(), r.models.comp()));
}
BENCHMARK(BM_CompressAsset)->Unit(benchmark::kMillisecond);

void BM_Edit(benchmark::State& state) {
  auto& r = rig();
  const bool global = state.range(0) == 0;
  Rng rng(8);
  const auto sample = global ? train::make_recolor_sample(r.scene, 1, 1, rng) : train::make_graffiti_sample(r.scene, 1, rng);
  for (auto _ : state) {
    state.PauseTiming();
    auto s = r.models.editor().start(r.base);
    state.ResumeTiming();
    benchmark::DoNotOptimize(r.models.editor().refine(s, sample.edits, sample.mode));
  }
  state.SetLabel(global ? "global" : "local");
}
BENCHMARK(BM_Edit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace splatedit

BENCHMARK_MAIN();
