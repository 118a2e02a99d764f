// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "attention_oracle.hpp"
#include "op_cases.hpp"
#include "splatedit/ad/attention.hpp"
#include "splatedit/ad/checkpoint.hpp"
#include "splatedit/ad/ops.hpp"

namespace ad = splatedit::ad;
using splatedit::Rng;

namespace {

ad::TensorD mat(std::int64_t r, std::int64_t c, std::vector<double> v) { return ad::TensorD::matrix(r, c, std::move(v)); }

}  // namespace

TEST(Matmul, IdentityAndDot) {
  ad::TapeD tape;
  auto a = tape.constant(mat(2, 2, {1, 2, 3, 4}));
  auto i2 = tape.constant(mat(2, 2, {1, 0, 0, 1}));
  auto c = ad::matmul(a, i2);
  EXPECT_EQ(c.value().storage(), (std::vector<double>{1, 2, 3, 4}));

  auto row = tape.constant(mat(1, 2, {1, 2}));
  auto col = tape.constant(mat(2, 1, {3, 4}));
  EXPECT_DOUBLE_EQ(ad::matmul(row, col).value().item(), 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  ad::TapeD tape;
  auto a = tape.constant(ad::TensorD({2, 3}));
  auto b = tape.constant(ad::TensorD({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const splatedit::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradOfSumIsColumnSumsOfB) {
  ad::TapeD tape;
  auto a = tape.leaf(mat(2, 3, {1, -2, 0.5, 3, 1, -1}));
  auto b = tape.leaf(mat(3, 2, {2, 1, 0, -1, 4, 3}));
  tape.backward(ad::sum(ad::matmul(a, b)));
  // d sum(AB) / dA_ij = sum_k B_jk.
  const std::vector<double> expect{3, -1, 7, 3, -1, 7};
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(a.grad()[i], expect[static_cast<std::size_t>(i)]);
}

TEST(Softmax, Examples) {
  ad::TapeD tape;
  auto s = ad::softmax_lastdim(tape.constant(mat(2, 3, {0, 0, 0, 1, 1, 1})));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(s.value()[i], 1.0 / 3.0, 1e-15);
  auto s2 = ad::softmax_lastdim(tape.constant(mat(1, 2, {0, std::log(2.0)})));
  EXPECT_NEAR(s2.value()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s2.value()[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, NanPropagates) {
  ad::TapeD tape;
  auto s = ad::softmax_lastdim(tape.constant(mat(1, 3, {0, std::nan(""), 1})));
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(std::isnan(s.value()[i]));
}

TEST(Softmax, LargeInputsAreStable) {
  ad::TapeF tape;
  auto s = ad::softmax_lastdim(tape.constant(ad::TensorF::matrix(1, 2, {1000.f, 1000.f})));
  EXPECT_FLOAT_EQ(s.value()[0], 0.5f);
}

TEST(LayerNorm, Examples) {
  ad::TapeD tape;
  auto ones = tape.constant(ad::TensorD({2}, 1.0));
  auto zeros = tape.constant(ad::TensorD({2}, 0.0));
  auto y = ad::layernorm(tape.constant(mat(1, 2, {5, 5})), ones, zeros, 1e-5);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 0.0);
  auto y2 = ad::layernorm(tape.constant(mat(1, 2, {-1, 1})), ones, zeros, 1e-14);
  EXPECT_NEAR(y2.value()[0], -1.0, 1e-12);
  EXPECT_NEAR(y2.value()[1], 1.0, 1e-12);
}

TEST(LayerNorm, MismatchedGainThrows) {
  ad::TapeD tape;
  auto x = tape.constant(ad::TensorD({2, 3}));
  auto g = tape.constant(ad::TensorD({2}));
  EXPECT_THROW(ad::layernorm(x, g, g, 1e-5), splatedit::ShapeError);
}

TEST(SwiGlu, Examples) {
  ad::TapeD tape;
  auto w = [&](std::int64_t r, std::int64_t c) {
    ad::TensorD t({r, c});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
    return tape.constant(t);
  };
  auto zero = ad::swiglu_mlp(tape.constant(ad::TensorD({2, 4})), w(6, 4), w(6, 4), w(4, 6));
  for (double v : zero.value().data()) EXPECT_EQ(v, 0.0);

  auto one = tape.constant(mat(1, 1, {1}));
  auto y = ad::swiglu_mlp(one, one, one, one);
  EXPECT_NEAR(y.value().item(), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(y.value().item(), 0.7311, 1e-4);
}

TEST(SwiGlu, BadShapesThrow) {
  ad::TapeD tape;
  auto x = tape.constant(ad::TensorD({2, 4}));
  EXPECT_THROW(ad::swiglu_mlp(x, tape.constant(ad::TensorD({6, 4})), tape.constant(ad::TensorD({6, 3})),
                              tape.constant(ad::TensorD({4, 6}))),
               splatedit::ShapeError);
}

TEST(Backward, SquareAtThree) {
  ad::TapeD tape;
  auto x = tape.leaf(ad::TensorD::scalar(3.0));
  tape.backward(ad::square(x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, DetachBlocksFlow) {
  ad::TapeD tape;
  auto x = tape.leaf(ad::TensorD::scalar(2.0));
  auto y = ad::square(x);
  auto loss = ad::add(ad::detach(y), ad::scale(x, 0.0));
  tape.backward(loss);
  EXPECT_EQ(x.grad().item(), 0.0);
  EXPECT_TRUE(y.grad().empty() || y.grad().item() == 0.0);
}

TEST(Backward, NonScalarIsContractError) {
  ad::TapeD tape;
  auto x = tape.leaf(ad::TensorD({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), splatedit::ContractError);
}

TEST(Backward, TwoLevelUnrollMatchesHandDerivation) {
  // Inner loss 0.5 (w - c)^2 with hand-written gradient (w - c); one GD step
  // w1 = w0 - eta (w0 - c); outer loss (w1 x - y)^2.
  // dL/dw0 = 2 (w1 x - y) x (1 - eta), dL/dc = 2 (w1 x - y) x eta.
  const double w0v = 1.0, cv = 3.0, eta = 0.1, xv = 2.0, yv = 1.0;
  ad::TapeD tape;
  auto w0 = tape.leaf(ad::TensorD::scalar(w0v));
  auto c = tape.leaf(ad::TensorD::scalar(cv));
  auto inner_grad = ad::sub(w0, c);
  auto w1 = ad::sub(w0, ad::scale(inner_grad, eta));
  auto outer = ad::square(ad::add_scalar(ad::scale(w1, xv), -yv));
  tape.backward(outer);
  const double w1v = (1 - eta) * w0v + eta * cv;
  const double r = w1v * xv - yv;
  EXPECT_NEAR(w0.grad().item(), 2 * r * xv * (1 - eta), 1e-14);
  EXPECT_NEAR(c.grad().item(), 2 * r * xv * eta, 1e-14);
  EXPECT_NEAR(w0.grad().item(), 5.04, 1e-12);
  EXPECT_NEAR(c.grad().item(), 0.56, 1e-12);
}

TEST(Backward, DeterministicAcrossRuns) {
  Rng rng(7);
  ad::TapeF tape;
  ad::TensorF a({16, 16}), b({16, 16});
  for (auto& v : a.data()) v = static_cast<float>(rng.normal());
  for (auto& v : b.data()) v = static_cast<float>(rng.normal());
  auto va = tape.leaf(a), vb = tape.leaf(b);
  auto loss = ad::mean(ad::softmax_lastdim(ad::matmul(ad::silu(va), vb)));
  tape.backward(loss);
  const auto g1 = va.grad().storage();
  tape.backward(loss);
  EXPECT_EQ(g1, va.grad().storage());
}

TEST(Backward, ParameterAccumulates) {
  ad::Parameter<double> p{"w", ad::TensorD::scalar(2.0), {}, true};
  p.zero_grad();
  for (int i = 0; i < 2; ++i) {
    ad::TapeD tape;
    auto w = tape.param(p);
    tape.backward(ad::square(w));
  }
  EXPECT_DOUBLE_EQ(p.grad.item(), 8.0);
  ad::Parameter<double> frozen{"f", ad::TensorD::scalar(2.0), {}, false};
  ad::TapeD tape;
  auto f = tape.param(frozen);
  EXPECT_FALSE(f.requires_grad());
}

TEST(GradCheck, EveryOpOnRandomInstances) {
  for (const auto& op : splatedit::testing::all_op_cases()) {
    Rng rng(std::hash<std::string>{}(op.name) & 0xffff);
    for (int trial = 0; trial < 10; ++trial) {
      const auto res = splatedit::testing::grad_check(op.inputs(rng), op.build);
      EXPECT_LT(res.max_rel_err, 1e-6) << op.name << " trial " << trial;
    }
  }
}

TEST(PackedAttention, MatchesLoopOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int groups = 1 + static_cast<int>(rng.below(6));
    std::vector<std::int64_t> ql, kl;
    for (int g = 0; g < groups; ++g) {
      ql.push_back(static_cast<std::int64_t>(rng.below(5)));
      kl.push_back(1 + static_cast<std::int64_t>(rng.below(5)));
    }
    const auto qo = ad::offsets_from_lengths(ql), ko = ad::offsets_from_lengths(kl);
    const int dim = 8, heads = 2;
    auto q = splatedit::testing::random_tensor(rng, {qo.back(), dim}, -2, 2);
    auto k = splatedit::testing::random_tensor(rng, {ko.back(), dim}, -2, 2);
    auto v = splatedit::testing::random_tensor(rng, {ko.back(), dim}, -2, 2);
    ad::TapeD tape;
    auto out = ad::packed_attention(tape.constant(q), tape.constant(k), tape.constant(v), qo, ko, heads);
    const auto ref = splatedit::testing::loop_attention(q.storage(), k.storage(), v.storage(), qo, ko, dim, heads);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.value().storage()[i], ref[i], 1e-12);
  }
}

TEST(PackedAttention, RowsSumToOneAndModes) {
  Rng rng(3);
  auto q = splatedit::testing::random_tensor(rng, {5, 4});
  auto k = splatedit::testing::random_tensor(rng, {5, 4});
  const std::vector<std::int64_t> off{0, 2, 5};
  for (const auto& p : ad::attention_weights(q, k, off, off, 2)) {
    for (std::int64_t r = 0; r < p.dim(0); ++r) {
      double s = 0;
      for (std::int64_t c = 0; c < p.dim(1); ++c) s += p.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  ad::TapeD tape;
  auto v = splatedit::testing::random_tensor(rng, {5, 4});
  auto id = ad::packed_attention(tape.constant(q), tape.constant(k), tape.constant(v), off, off, 2,
                                 ad::AttentionMode::kIdentity);
  EXPECT_EQ(id.value().storage(), v.storage());
  auto un = ad::packed_attention(tape.constant(q), tape.constant(k), tape.constant(v), off, off, 2,
                                 ad::AttentionMode::kUniform);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(un.value().at(0, c), 0.5 * (v.at(0, c) + v.at(1, c)), 1e-15);
}

TEST(PackedAttention, BadOffsetsAreContractErrors) {
  ad::TapeD tape;
  auto x = tape.constant(ad::TensorD({4, 4}));
  const std::vector<std::int64_t> good{0, 4}, bad{0, 3};
  EXPECT_THROW(ad::packed_attention(x, x, x, good, bad, 2), splatedit::ContractError);
  EXPECT_THROW(ad::packed_attention(x, x, x, good, good, 3), splatedit::ShapeError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(5);
  ad::NamedTensors ts;
  for (int i = 0; i < 4; ++i) {
    ad::TensorF t({static_cast<std::int64_t>(i + 1), 3});
    for (auto& v : t.data()) v = static_cast<float>(rng.normal());
    ts.emplace_back("block." + std::to_string(i), t);
  }
  ts.emplace_back("scalar", ad::TensorF::scalar(std::numeric_limits<float>::denorm_min()));
  const auto path = (std::filesystem::temp_directory_path() / "splatedit_ckpt_test.bin").string();
  ad::save_checkpoint(path, ts);
  const auto back = ad::load_checkpoint(path);
  ASSERT_EQ(back.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(back[i].first, ts[i].first);
    EXPECT_EQ(back[i].second.shape(), ts[i].second.shape());
    EXPECT_EQ(std::memcmp(back[i].second.ptr(), ts[i].second.ptr(), sizeof(float) * ts[i].second.data().size()), 0);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicIsParseError) {
  const auto path = (std::filesystem::temp_directory_path() / "splatedit_bad_ckpt.bin").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT0000000000000000";
  }
  EXPECT_THROW(ad::load_checkpoint(path), splatedit::ParseError);
  std::filesystem::remove(path);
}
