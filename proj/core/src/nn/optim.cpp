// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/nn/optim.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "splatedit/common/error.hpp"

namespace splatedit::nn {

AdamW::AdamW(std::vector<Param*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

double AdamW::step(double lr) {
  double sq = 0.0;
  for (auto* p : params_) {
    if (!p->trainable || p->grad.numel() != p->value.numel()) continue;
    for (float g : p->grad.storage()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error("non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (!p->trainable || p->grad.numel() != p->value.numel()) continue;
    const bool decay = p->value.rank() >= 2;
    auto& val = p->value.storage();
    const auto& grad = p->grad.storage();
    auto& m = m_[i].storage();
    auto& v = v_[i].storage();
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grad[j] * clip;
      m[j] = static_cast<float>(cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g);
      v[j] = static_cast<float>(cfg_.beta2 * v[j] + (1 - cfg_.beta2) * g * g);
      double x = val[j];
      if (decay) x -= lr * cfg_.weight_decay * x;
      x -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      val[j] = static_cast<float>(x);
    }
  }
  return norm;
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

ad::NamedTensors AdamW::state() const {
  ad::NamedTensors out;
  out.emplace_back("adamw.t", ad::TensorF(ad::Shape{1}, static_cast<float>(t_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("adamw.m." + params_[i]->name, m_[i]);
    out.emplace_back("adamw.v." + params_[i]->name, v_[i]);
  }
  return out;
}

void AdamW::load_state(const ad::NamedTensors& s) {
  std::map<std::string, const ad::TensorF*> by_name;
  for (const auto& [n, t] : s) by_name[n] = &t;
  const auto t_it = by_name.find("adamw.t");
  if (t_it == by_name.end()) throw FormatError("optimizer state lacks adamw.t");
  t_ = static_cast<std::int64_t>(t_it->second->storage()[0]);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto m = by_name.find("adamw.m." + params_[i]->name);
    const auto v = by_name.find("adamw.v." + params_[i]->name);
    if (m == by_name.end() || v == by_name.end()) throw FormatError("optimizer state lacks " + params_[i]->name);
    if (m->second->shape() != params_[i]->value.shape()) throw FormatError("optimizer state shape for " + params_[i]->name);
    m_[i] = *m->second;
    v_[i] = *v->second;
  }
}

double cosine_lr(double base, std::int64_t step, std::int64_t total, std::int64_t warmup, double min_ratio) {
  if (warmup > 0 && step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base * (min_ratio + (1.0 - min_ratio) * c);
}

}  // namespace splatedit::nn
