// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/nn/params.hpp"

#include <set>

#include "splatedit/common/binio.hpp"
#include "splatedit/common/error.hpp"

namespace splatedit::nn {

namespace {
bool has_prefix(const std::string& name, const std::string& prefix) { return name.rfind(prefix, 0) == 0; }
}  // namespace

Param& ParamStore::create(const std::string& name, ad::Shape shape, Init init, Rng& rng) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  Param p;
  p.name = name;
  p.value = ad::TensorF(std::move(shape));
  switch (init.kind) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      for (auto& v : p.value.storage()) v = 1.f;
      break;
    case Init::kConstant:
      for (auto& v : p.value.storage()) v = static_cast<float>(init.value);
      break;
    case Init::kNormal:
      for (auto& v : p.value.storage()) v = static_cast<float>(rng.normal(0.0, init.value));
      break;
  }
  p.zero_grad();
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

std::vector<Param*> ParamStore::parameters(const std::string& prefix) {
  std::vector<Param*> out;
  for (auto& p : params_) {
    if (has_prefix(p.name, prefix)) out.push_back(&p);
  }
  return out;
}

std::int64_t ParamStore::numel(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (has_prefix(p.name, prefix)) n += p.value.numel();
  }
  return n;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (has_prefix(p.name, prefix)) p.trainable = trainable;
  }
}

void ParamStore::zero_grad(const std::string& prefix) {
  for (auto& p : params_) {
    if (has_prefix(p.name, prefix)) p.zero_grad();
  }
}

ad::NamedTensors ParamStore::state(const std::string& prefix) const {
  ad::NamedTensors out;
  for (const auto& p : params_) {
    if (has_prefix(p.name, prefix)) out.emplace_back(p.name, p.value);
  }
  return out;
}

void ParamStore::load_state(const ad::NamedTensors& tensors, const std::string& prefix, bool strict) {
  std::set<std::string> seen;
  for (const auto& [name, t] : tensors) {
    if (!has_prefix(name, prefix)) continue;
    if (!contains(name)) throw FormatError("checkpoint has unknown parameter " + name);
    auto& p = at(name);
    if (p.value.shape() != t.shape()) {
      throw FormatError("parameter " + name + " has shape " + ad::shape_str(t.shape()) + ", expected " +
                        ad::shape_str(p.value.shape()));
    }
    p.value = t;
    seen.insert(name);
  }
  if (strict) {
    for (const auto& p : params_) {
      if (has_prefix(p.name, prefix) && !seen.count(p.name)) throw FormatError("checkpoint lacks parameter " + p.name);
    }
  }
}

void ParamStore::save(const std::string& path, const std::string& prefix) const { ad::save_checkpoint(path, state(prefix)); }

void ParamStore::load(const std::string& path, const std::string& prefix, bool strict) {
  load_state(ad::load_checkpoint(path), prefix, strict);
}

std::uint64_t ParamStore::fingerprint(const std::string& prefix) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    if (!has_prefix(p.name, prefix)) continue;
    h = io::fnv1a(p.name.data(), p.name.size(), h);
    h = io::fnv1a(p.value.ptr(), static_cast<std::size_t>(p.value.numel()) * sizeof(float), h);
  }
  return h;
}

}  // namespace splatedit::nn
