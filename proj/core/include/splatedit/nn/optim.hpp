// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "splatedit/nn/params.hpp"

namespace splatedit::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

/// Decoupled-weight-decay Adam. Decay applies to parameters of rank >= 2.
/// Non-trainable parameters are skipped entirely.
class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig cfg = {});

  /// Applies one update with learning rate `lr`; returns the pre-clip
  /// gradient norm. Gradients are left in place (call zero_grad).
  double step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }

  /// Moment buffers and step count, for resumable training.
  ad::NamedTensors state() const;
  void load_state(const ad::NamedTensors& s);

 private:
  std::vector<Param*> params_;
  AdamWConfig cfg_;
  std::vector<ad::TensorF> m_, v_;
  std::int64_t t_ = 0;
};

/// Linear warmup then cosine decay from `base` to `base * min_ratio` at `total`.
double cosine_lr(double base, std::int64_t step, std::int64_t total, std::int64_t warmup = 0, double min_ratio = 0.0);

}  // namespace splatedit::nn
