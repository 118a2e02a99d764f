// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "splatedit/ad/attention.hpp"
#include "splatedit/ad/ops.hpp"
#include "splatedit/common/rng.hpp"

// Every differentiable tensor-engine op as a (random inputs, scalar loss) case.
// The loss contracts the op output with a fixed random weight so that every
// output element carries a distinct gradient.
namespace splatedit::testing {

struct OpCase {
  std::string name;
  std::function<std::vector<ad::TensorD>(Rng&)> inputs;
  LossBuilder build;
};

inline ad::TensorD random_tensor(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  ad::TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Weighted sum with weights derived from the output shape only (no rng), so
// the loss is a fixed function of the inputs.
inline ad::VarD contract(ad::TapeD& tape, const ad::VarD& y) {
  ad::TensorD w(y.shape());
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return ad::sum(ad::mul(y, tape.constant(w)));
}

inline std::vector<OpCase> all_op_cases() {
  using ad::Shape;
  using ad::TapeD;
  using ad::TensorD;
  using ad::VarD;
  using Leaves = std::vector<VarD>;
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::function<std::vector<TensorD>(Rng&)> in, LossBuilder b) {
    cases.push_back(OpCase{std::move(name), std::move(in), std::move(b)});
  };
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& r) { return std::vector<TensorD>{random_tensor(r, a), random_tensor(r, b)}; };
  };
  auto one = [](Shape a, double lo = -1.0, double hi = 1.0) {
    return [a, lo, hi](Rng& r) { return std::vector<TensorD>{random_tensor(r, a, lo, hi)}; };
  };

  add_case("matmul", two({3, 4}, {4, 5}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::matmul(x[0], x[1])); });
  add_case("matmul_nt", two({3, 4}, {5, 4}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::matmul_nt(x[0], x[1])); });
  add_case("transpose", one({3, 5}), [](TapeD& t, const Leaves& x) { return contract(t, ad::transpose(x[0])); });
  add_case("add", two({4, 3}, {4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::add(x[0], x[1])); });
  add_case("sub", two({4, 3}, {4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::sub(x[0], x[1])); });
  add_case("mul", two({4, 3}, {4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::mul(x[0], x[1])); });
  add_case("scale", one({4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::scale(x[0], -1.7)); });
  add_case("add_scalar", one({4, 3}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::square(ad::add_scalar(x[0], 0.4))); });
  add_case("mul_scalar", two({4, 3}, {1}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::mul_scalar(x[0], x[1])); });
  add_case("add_row", two({4, 3}, {3}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::square(ad::add_row(x[0], x[1]))); });
  add_case("mul_row", two({4, 3}, {3}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::mul_row(x[0], x[1])); });
  add_case("sigmoid", one({4, 3}, -3, 3), [](TapeD& t, const Leaves& x) { return contract(t, ad::sigmoid(x[0])); });
  add_case("silu", one({4, 3}, -3, 3), [](TapeD& t, const Leaves& x) { return contract(t, ad::silu(x[0])); });
  add_case("silu_deriv", one({4, 3}, -3, 3),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::silu_deriv(x[0])); });
  add_case("tanh", one({4, 3}, -2, 2), [](TapeD& t, const Leaves& x) { return contract(t, ad::tanh(x[0])); });
  add_case("exp", one({4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::exp(x[0])); });
  add_case("square", one({4, 3}), [](TapeD& t, const Leaves& x) { return contract(t, ad::square(x[0])); });
  add_case("sqrt", one({4, 3}, 0.2, 2.0), [](TapeD& t, const Leaves& x) { return contract(t, ad::sqrt(x[0])); });
  add_case("reciprocal", one({4, 3}, 0.5, 2.0),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::reciprocal(x[0])); });
  add_case("clamp", one({4, 3}, -2, 2), [](TapeD& t, const Leaves& x) {
    // Inputs land near +-0.8 only with probability ~0; the kink is not sampled.
    return contract(t, ad::clamp(x[0], -0.8, 0.8));
  });
  add_case("sum", one({4, 3}), [](TapeD&, const Leaves& x) { return ad::sum(ad::square(x[0])); });
  add_case("mean", one({4, 3}), [](TapeD&, const Leaves& x) { return ad::mean(ad::square(x[0])); });
  add_case("mse", two({4, 3}, {4, 3}), [](TapeD&, const Leaves& x) { return ad::mse(x[0], x[1]); });
  add_case("softmax_lastdim", one({3, 5}, -2, 2),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::softmax_lastdim(x[0])); });
  add_case("layernorm",
           [](Rng& r) {
             return std::vector<TensorD>{random_tensor(r, {3, 6}), random_tensor(r, {6}), random_tensor(r, {6})};
           },
           [](TapeD& t, const Leaves& x) { return contract(t, ad::layernorm(x[0], x[1], x[2], 1e-5)); });
  add_case("swiglu_mlp",
           [](Rng& r) {
             return std::vector<TensorD>{random_tensor(r, {3, 8}), random_tensor(r, {16, 8}),
                                         random_tensor(r, {16, 8}), random_tensor(r, {8, 16})};
           },
           [](TapeD& t, const Leaves& x) { return contract(t, ad::swiglu_mlp(x[0], x[1], x[2], x[3])); });
  add_case("concat_cols", two({3, 2}, {3, 4}), [](TapeD& t, const Leaves& x) {
    std::vector<VarD> parts{x[0], x[1], x[0]};
    return contract(t, ad::square(ad::concat_cols<double>(parts)));
  });
  add_case("concat_rows", two({2, 3}, {4, 3}), [](TapeD& t, const Leaves& x) {
    std::vector<VarD> parts{x[1], x[0]};
    return contract(t, ad::square(ad::concat_rows<double>(parts)));
  });
  add_case("slice_cols", one({3, 6}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::square(ad::slice_cols(x[0], 1, 4))); });
  add_case("slice_rows", one({5, 3}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::square(ad::slice_rows(x[0], 2, 5))); });
  add_case("gather_rows", one({5, 3}), [](TapeD& t, const Leaves& x) {
    const std::vector<std::int64_t> idx{4, 0, 4, 2};
    return contract(t, ad::square(ad::gather_rows<double>(x[0], idx)));
  });
  add_case("put_rows", two({5, 3}, {2, 3}), [](TapeD& t, const Leaves& x) {
    const std::vector<std::int64_t> idx{3, 1};
    return contract(t, ad::square(ad::put_rows<double>(x[0], idx, x[1])));
  });
  add_case("segment_mean", one({6, 3}), [](TapeD& t, const Leaves& x) {
    const std::vector<std::int64_t> off{0, 1, 4, 6};
    return contract(t, ad::square(ad::segment_mean<double>(x[0], off)));
  });
  add_case("reshape", one({4, 3}),
           [](TapeD& t, const Leaves& x) { return contract(t, ad::square(ad::reshape(x[0], {2, 6}))); });
  add_case("packed_attention",
           [](Rng& r) {
             return std::vector<TensorD>{random_tensor(r, {6, 4}), random_tensor(r, {7, 4}), random_tensor(r, {7, 4})};
           },
           [](TapeD& t, const Leaves& x) {
             const std::vector<std::int64_t> qo{0, 2, 3, 6}, ko{0, 3, 4, 7};
             return contract(t, ad::packed_attention<double>(x[0], x[1], x[2], qo, ko, 2));
           });
  return cases;
}

}  // namespace splatedit::testing
