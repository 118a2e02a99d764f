// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "splatedit/ad/tensor.hpp"

namespace splatedit::ad {

/// A persistent trainable array. Lives outside any tape; tapes bind to it by
/// reference and accumulate into `grad` on backward.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::int32_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }
  Tape<T>* tape() const noexcept { return tape_; }
  std::int32_t id() const noexcept { return id_; }

  const Tensor<T>& value() const;
  /// Gradient after backward(); an empty tensor if none reached this node.
  const Tensor<T>& grad() const;
  bool requires_grad() const;

  const Shape& shape() const { return value().shape(); }
  std::int64_t rows() const { return value().rows(); }
  std::int64_t cols() const { return value().cols(); }
  std::int64_t numel() const { return value().numel(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a valid
/// topological order; backward() replays them in reverse exactly once each.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::int32_t> parents;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When disabled, new nodes never require grad and keep no closures.
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr, nullptr); }

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad && grad_enabled_, {}, nullptr, nullptr);
  }

  Var<T> param(Parameter<T>& p) {
    const bool rg = p.trainable && grad_enabled_;
    return push(p.value, rg, {}, nullptr, rg ? &p : nullptr);
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<T>>(parents), std::move(fn));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn) {
    bool rg = false;
    std::vector<std::int32_t> ids;
    ids.reserve(parents.size());
    for (const auto& p : parents) {
      check_owned(p);
      ids.push_back(p.id());
      rg = rg || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
    }
    rg = rg && grad_enabled_;
    return push(std::move(value), rg, std::move(ids), rg ? std::move(fn) : BackwardFn{}, nullptr);
  }

  /// Adds `g` into the gradient buffer of `v` (no-op if `v` needs no grad).
  void accumulate(const Var<T>& v, const Tensor<T>& g) {
    auto& n = mut_node(v);
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      if (g.numel() != n.value.numel()) {
        throw ShapeError("gradient " + shape_str(g.shape()) + " for value " + shape_str(n.value.shape()));
      }
      n.grad = Tensor<T>(n.value.shape(), g.storage());
      n.has_grad = true;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Mutable gradient buffer of `v`, zero-initialised on first access.
  /// Returns nullptr when `v` needs no gradient.
  Tensor<T>* grad_buffer(const Var<T>& v) {
    auto& n = mut_node(v);
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return &n.grad;
  }

  bool requires_grad(const Var<T>& v) const { return node(v).requires_grad; }

  /// Installs the backward closure of an already-recorded node. Lets ops
  /// whose rule reads their own output capture the output handle.
  void set_backward(const Var<T>& v, BackwardFn fn) {
    auto& n = mut_node(v);
    if (n.requires_grad) n.backward = std::move(fn);
  }

  /// Populates grads for every ancestor of `loss` that requires grad and
  /// accumulates into bound parameters. May be called again on the same tape;
  /// node grads are reset first.
  void backward(const Var<T>& loss) {
    check_owned(loss);
    auto& root = mut_node(loss);
    if (root.value.numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root.value.shape()));
    }
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor<T>();
    }
    if (!root.requires_grad) return;
    root.grad = Tensor<T>(root.value.shape(), T{1});
    root.has_grad = true;
    for (std::int32_t id = loss.id(); id >= 0; --id) {
      auto& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) {
        auto& pg = n.param->grad;
        if (pg.numel() != n.grad.numel()) pg = Tensor<T>(n.param->value.shape());
        auto dst = pg.data();
        auto src = n.grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node_at(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(const Var<T>& v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id())];
  }

 private:
  Node& mut_node(const Var<T>& v) {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id())];
  }

  void check_owned(const Var<T>& v) const {
    if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
      throw ContractError("variable does not belong to this tape");
    }
  }

  Var<T> push(Tensor<T> value, bool rg, std::vector<std::int32_t> parents, BackwardFn fn,
              Parameter<T>* param) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.parents = std::move(parents);
    n.backward = std::move(fn);
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  // deque keeps references to earlier node values stable while appending.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  if (!valid()) throw ContractError("use of an unbound variable");
  return std::as_const(*tape_).node(*this).value;
}

template <class T>
const Tensor<T>& Var<T>::grad() const {
  if (!valid()) throw ContractError("use of an unbound variable");
  return std::as_const(*tape_).node(*this).grad;
}

template <class T>
bool Var<T>::requires_grad() const {
  return valid() && tape_->requires_grad(*this);
}

using TapeF = Tape<float>;
using TapeD = Tape<double>;
using VarF = Var<float>;
using VarD = Var<double>;

}  // namespace splatedit::ad
