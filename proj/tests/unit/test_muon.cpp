// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gradcheck.hpp"
#include "splatedit/common/error.hpp"
#include "splatedit/common/rng.hpp"
#include "splatedit/ttt/muon.hpp"

namespace splatedit::ttt {
namespace {

using Mat = Eigen::MatrixXd;

ad::TensorD to_tensor(const Mat& m) {
  ad::TensorD t(ad::Shape{m.rows(), m.cols()});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
  }
  return t;
}

Mat to_mat(const ad::TensorD& t) {
  Mat m(t.dim(0), t.dim(1));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t[i * m.cols() + j];
  }
  return m;
}

Mat gaussian(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// Scalar hand-run of the schedule on a normalised input of 1.
double scalar_run(NsCoefficients v, int iters) {
  double x = 1.0;
  for (int i = 0; i < iters; ++i) {
    const auto [a, b, c] = ns_coefficients(v, i);
    x = a * x + b * x * x * x + c * x * x * x * x * x;
  }
  return x;
}

TEST(NewtonSchulz, OrthogonalInputIsNearFixedPoint) {
  Rng rng(1);
  const Mat q = Eigen::HouseholderQR<Mat>(gaussian(16, 16, rng)).householderQ();
  const auto out = to_mat(newton_schulz_orth(to_tensor(q), 7).value);
  EXPECT_LT((out - q).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(NewtonSchulz, DiagonalMapsToIdentity) {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 1;
  const auto out = to_mat(newton_schulz_orth(to_tensor(d), 7).value);
  EXPECT_LT((out - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(NewtonSchulz, FiveStepsMatchPolarFactorDirection) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    // Well-conditioned input: singular values in [1, 10].
    Eigen::JacobiSVD<Mat> base(gaussian(12, 8, rng), Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s(8);
    for (int i = 0; i < 8; ++i) s(i) = 1.0 + 9.0 * rng.uniform();
    const Mat m = base.matrixU() * s.asDiagonal() * base.matrixV().transpose();
    const Mat polar = base.matrixU() * base.matrixV().transpose();
    const auto out = to_mat(newton_schulz_orth(to_tensor(m), 5).value);
    EXPECT_LT((out - polar).norm() / polar.norm(), 0.13);
  }
}

TEST(NewtonSchulz, BandOnDesignedInterval) {
  // Singular values of the output stay in [0.7, 1.3] whenever the input's
  // smallest normalised singular value is inside the schedule's design range.
  Rng rng(3);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Mat m = gaussian(32, 32, rng);
    Eigen::JacobiSVD<Mat> svd_in(m);
    if (svd_in.singularValues().minCoeff() / m.norm() < 1e-3) continue;
    ++checked;
    Eigen::JacobiSVD<Mat> svd(to_mat(newton_schulz_orth(to_tensor(m), 5).value));
    EXPECT_GE(svd.singularValues().minCoeff(), 0.7);
    EXPECT_LE(svd.singularValues().maxCoeff(), 1.3);
  }
  EXPECT_GT(checked, 40);
}

TEST(NewtonSchulz, ClassicConstantsStallBelowOne) {
  EXPECT_NEAR(scalar_run(NsCoefficients::kClassic, 5), 0.70, 0.02);
  EXPECT_NEAR(scalar_run(NsCoefficients::kSchedule, 5), 1.0, 0.13);
  EXPECT_NEAR(scalar_run(NsCoefficients::kSchedule, 8), 1.0, 1e-3);
}

TEST(NewtonSchulz, ZeroMatrixIsFlaggedAndZero) {
  const auto r = newton_schulz_orth(ad::TensorD(ad::Shape{3, 4}), 5);
  EXPECT_TRUE(r.zero_input);
  for (double v : r.value.storage()) EXPECT_EQ(v, 0.0);
}

TEST(NewtonSchulz, TallAndWideAgreeUpToTranspose) {
  Rng rng(4);
  const Mat m = gaussian(9, 4, rng);
  const auto a = to_mat(newton_schulz_orth(to_tensor(m), 5).value);
  const auto b = to_mat(newton_schulz_orth(to_tensor(Mat(m.transpose())), 5).value);
  EXPECT_LT((a - b.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Muon, StationaryPointLeavesWeightsUnchanged) {
  ad::TapeD tape;
  FastVars<double> w;
  w.linear = true;
  w.down = tape.leaf(ad::TensorD(ad::Shape{2, 2}, {1.0, 2.0, -1.0, 0.5}), false);
  const auto k = tape.leaf(ad::TensorD(ad::Shape{3, 2}, {1, 0, 0, 1, 2, -1}), false);
  const auto v = ad::matmul_nt(k, w.down);
  const auto r = muon_adapt(w, k, v, MuonConfig{});
  EXPECT_EQ(r.weights.down.value().storage(), w.down.value().storage());
  for (double l : r.loss_trace) EXPECT_EQ(l, 0.0);
}

TEST(Muon, ScalarProbeStepsBySign) {
  // f(x) = w x, k = 1, v = 2, w0 = 0: gradient -4, orthogonalised to about -1.
  ad::TapeD tape;
  FastVars<double> w;
  w.linear = true;
  w.down = tape.leaf(ad::TensorD(ad::Shape{1, 1}, 0.0), false);
  const auto k = tape.leaf(ad::TensorD(ad::Shape{1, 1}, 1.0), false);
  const auto v = tape.leaf(ad::TensorD(ad::Shape{1, 1}, 2.0), false);
  const auto g = fast_loss_grad(w, k, v);
  EXPECT_DOUBLE_EQ(g.down.value().item(), -4.0);
  MuonConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.0;
  cfg.steps = 1;
  const auto r = muon_adapt(w, k, v, cfg);
  const double expect = 0.1 * scalar_run(NsCoefficients::kSchedule, 5) * (1.0 / (1.0 + 1e-7 / 4.0));
  EXPECT_NEAR(r.weights.down.value().item(), expect, 1e-6);
  EXPECT_NEAR(r.weights.down.value().item(), 0.1, 0.013);
}

TEST(Muon, EmptyKeysAreContractError) {
  ad::TapeD tape;
  FastVars<double> w;
  w.linear = true;
  w.down = tape.leaf(ad::TensorD(ad::Shape{2, 2}), false);
  const auto k = tape.leaf(ad::TensorD(ad::Shape{0, 2}), false);
  EXPECT_THROW(muon_adapt(w, k, k, MuonConfig{}), ContractError);
}

FastVars<double> random_fast(ad::TapeD& tape, int d, int h, Rng& rng, bool grad = false) {
  auto mk = [&](int r, int c) {
    ad::TensorD t(ad::Shape{r, c});
    for (auto& x : t.storage()) x = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(c)));
    return tape.leaf(t, grad);
  };
  FastVars<double> w;
  w.gate = mk(h, d);
  w.up = mk(h, d);
  w.down = mk(d, h);
  return w;
}

ad::TensorD random_rows(int n, int d, Rng& rng) {
  ad::TensorD t(ad::Shape{n, d});
  for (auto& x : t.storage()) x = rng.normal();
  return t;
}

TEST(Muon, AnalyticGradientMatchesTape) {
  Rng rng(5);
  ad::TapeD tape;
  const auto w = random_fast(tape, 6, 10, rng, true);
  const auto k = tape.leaf(random_rows(7, 6, rng), false);
  const auto v = tape.leaf(random_rows(7, 6, rng), false);
  const auto g = fast_loss_grad(w, k, v);
  tape.backward(fast_loss(w, k, v));
  for (auto [a, b] : {std::pair{&g.gate, &w.gate}, {&g.up, &w.up}, {&g.down, &w.down}}) {
    const auto& ga = a->value();
    const auto& gb = b->grad();
    for (std::int64_t i = 0; i < ga.numel(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-10);
  }
}

TEST(Muon, UnrolledInnerLoopIsDifferentiable) {
  Rng rng(6);
  const int d = 3, h = 4;
  std::vector<ad::TensorD> inputs;
  for (auto [r, c] : {std::pair{h, d}, {h, d}, {d, h}}) {
    ad::TensorD t(ad::Shape{r, c});
    for (auto& x : t.storage()) x = rng.normal(0.0, 0.5);
    inputs.push_back(t);
  }
  inputs.push_back(random_rows(5, d, rng));
  inputs.push_back(random_rows(5, d, rng));
  const auto query = random_rows(2, d, rng);
  MuonConfig cfg;
  cfg.steps = 2;
  cfg.lr = 0.05;
  const auto res = testing::grad_check(
      inputs,
      [&](ad::TapeD& tape, const std::vector<ad::VarD>& x) {
        FastVars<double> w{x[0], x[1], x[2]};
        const auto r = muon_adapt(w, x[3], x[4], cfg);
        return ad::sum(ad::square(fast_apply(r.weights, tape.leaf(query, false))));
      },
      1e-6);
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(Muon, LossTraceNonIncreasingOnRandomBatches) {
  Rng rng(7);
  int monotone = 0;
  for (int batch = 0; batch < 100; ++batch) {
    ad::TapeD tape;
    tape.set_grad_enabled(false);
    const auto w = random_fast(tape, 16, 32, rng);
    const auto k = tape.leaf(random_rows(24, 16, rng), false);
    const auto v = tape.leaf(random_rows(24, 16, rng), false);
    const auto r = muon_adapt(w, k, v, MuonConfig{});
    ASSERT_EQ(r.loss_trace.size(), 6u);
    bool ok = true;
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) ok = ok && r.loss_trace[i] <= r.loss_trace[i - 1];
    monotone += ok;
  }
  EXPECT_GE(monotone, 95);
}

}  // namespace
}  // namespace splatedit::ttt
