// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "splatedit/ad/ops.hpp"
#include "splatedit/common/image.hpp"

namespace splatedit::train {

/// Finite-difference image gradients at scales 1, 1/2 and 1/4 (2x2 average
/// pooling between scales), stacked. `img` is [H x W x 3]; H and W must be
/// divisible by 4.
template <class T>
std::vector<ad::Var<T>> gradient_pyramid(const ad::Var<T>& img);

/// mean((a - b)^2) + lambda * mean over the pyramid of (phi(a) - phi(b))^2.
/// ShapeError on mismatched images.
template <class T>
ad::Var<T> recon_loss(const ad::Var<T>& render, const ad::Var<T>& target, double lambda_perc = 0.5);

/// -10 log10(MSE), 99 when MSE < 1e-10. ShapeError on size mismatch.
double psnr(const std::vector<float>& a, const std::vector<float>& b);
double psnr(const io::Image& a, const io::Image& b);
/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, valid region only (images at least 11x11).
double ssim(const io::Image& a, const io::Image& b);

}  // namespace splatedit::train
