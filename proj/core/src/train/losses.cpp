// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/train/losses.hpp"

#include <cmath>

#include "splatedit/common/error.hpp"

namespace splatedit::train {

namespace {

// Constant operators acting on an [H x 3W] image matrix.
template <class T>
ad::Var<T> constant(ad::Tape<T>& tape, std::int64_t r, std::int64_t c, auto fill) {
  ad::Tensor<T> m(ad::Shape{r, c});
  fill(m);
  return tape.leaf(std::move(m), false);
}

/// Row differences: [(H-1) x H].
template <class T>
ad::Var<T> row_diff(ad::Tape<T>& tape, std::int64_t h) {
  return constant<T>(tape, h - 1, h, [&](ad::Tensor<T>& m) {
    for (std::int64_t i = 0; i + 1 < h; ++i) {
      m[i * h + i] = T(-1);
      m[i * h + i + 1] = T(1);
    }
  });
}

/// Column differences along x within each channel: [3W x 3(W-1)].
template <class T>
ad::Var<T> col_diff(ad::Tape<T>& tape, std::int64_t w) {
  const std::int64_t out = 3 * (w - 1);
  return constant<T>(tape, 3 * w, out, [&](ad::Tensor<T>& m) {
    for (std::int64_t x = 0; x + 1 < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        m[(x * 3 + c) * out + x * 3 + c] = T(-1);
        m[((x + 1) * 3 + c) * out + x * 3 + c] = T(1);
      }
    }
  });
}

template <class T>
ad::Var<T> row_pool(ad::Tape<T>& tape, std::int64_t h) {
  return constant<T>(tape, h / 2, h, [&](ad::Tensor<T>& m) {
    for (std::int64_t i = 0; i < h / 2; ++i) m[i * h + 2 * i] = m[i * h + 2 * i + 1] = T(0.5);
  });
}

template <class T>
ad::Var<T> col_pool(ad::Tape<T>& tape, std::int64_t w) {
  const std::int64_t out = 3 * (w / 2);
  return constant<T>(tape, 3 * w, out, [&](ad::Tensor<T>& m) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) m[(x * 3 + c) * out + (x / 2) * 3 + c] = T(0.5);
    }
  });
}

void check_pair(const ad::Shape& a, const ad::Shape& b) {
  if (a != b) throw ShapeError("image shapes differ: " + ad::shape_str(a) + " vs " + ad::shape_str(b));
}

}  // namespace

template <class T>
std::vector<ad::Var<T>> gradient_pyramid(const ad::Var<T>& img) {
  const auto& s = img.value().shape();
  if (s.size() != 3 || s[2] != 3 || s[0] % 4 != 0 || s[1] % 4 != 0) {
    throw ShapeError("gradient pyramid needs an [H x W x 3] image with H, W divisible by 4, got " + ad::shape_str(s));
  }
  auto& tape = *img.tape();
  std::int64_t h = s[0], w = s[1];
  auto x = ad::reshape(img, ad::Shape{h, 3 * w});
  std::vector<ad::Var<T>> out;
  for (int level = 0; level < 3; ++level) {
    if (level > 0) {
      x = ad::matmul(ad::matmul(row_pool<T>(tape, h), x), col_pool<T>(tape, w));
      h /= 2;
      w /= 2;
    }
    out.push_back(ad::matmul(x, col_diff<T>(tape, w)));
    out.push_back(ad::matmul(row_diff<T>(tape, h), x));
  }
  return out;
}

template <class T>
ad::Var<T> recon_loss(const ad::Var<T>& render, const ad::Var<T>& target, double lambda_perc) {
  check_pair(render.value().shape(), target.value().shape());
  if (lambda_perc < 0) throw ContractError("lambda_perc must be non-negative");
  auto loss = ad::mse(render, target);
  if (lambda_perc == 0) return loss;
  const auto ga = gradient_pyramid(render);
  const auto gb = gradient_pyramid(target);
  std::int64_t total = 0;
  for (const auto& g : ga) total += g.value().numel();
  ad::Var<T> perc;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    const auto term = ad::sum(ad::square(ad::sub(ga[i], gb[i])));
    perc = i == 0 ? term : ad::add(perc, term);
  }
  return ad::add(loss, ad::scale(perc, static_cast<T>(lambda_perc / static_cast<double>(total))));
}

double psnr(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("psnr needs equal, non-empty images");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  return mse < 1e-10 ? 99.0 : -10.0 * std::log10(mse);
}

double psnr(const io::Image& a, const io::Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) throw ShapeError("psnr: image sizes differ");
  return psnr(a.data, b.data);
}

double ssim(const io::Image& a, const io::Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) throw ShapeError("ssim: image sizes differ");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.width < kWin || a.height < kWin) throw ShapeError("ssim needs images of at least 11x11");
  std::array<double, kWin> g{};
  double gs = 0;
  for (int i = 0; i < kWin; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-0.5 * std::pow((i - kWin / 2) / kSigma, 2));
    gs += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  std::int64_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y + kWin <= a.height; ++y) {
      for (int x = 0; x + kWin <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int j = 0; j < kWin; ++j) {
          for (int i = 0; i < kWin; ++i) {
            const double w = g[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(i)];
            const double va = a.at(x + i, y + j, c), vb = b.at(x + i, y + j, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

template std::vector<ad::Var<float>> gradient_pyramid(const ad::Var<float>&);
template std::vector<ad::Var<double>> gradient_pyramid(const ad::Var<double>&);
template ad::Var<float> recon_loss(const ad::Var<float>&, const ad::Var<float>&, double);
template ad::Var<double> recon_loss(const ad::Var<double>&, const ad::Var<double>&, double);

}  // namespace splatedit::train
