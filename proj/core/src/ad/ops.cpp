// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/ad/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace splatedit::ad {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;

template <class T>
CMap<T> cmap(const Tensor<T>& t, std::int64_t rows, std::int64_t cols) {
  return CMap<T>(t.ptr(), rows, cols);
}
template <class T>
MMap<T> mmap(Tensor<T>& t, std::int64_t rows, std::int64_t cols) {
  return MMap<T>(t.ptr(), rows, cols);
}

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <class T>
Tape<T>& tape_of(const Var<T>& a) {
  if (!a.valid()) throw ContractError("operation on an unbound variable");
  return *a.tape();
}

// Elementwise unary op: `f` maps x -> y, `df` maps (x, y) -> dy/dx.
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  auto& tape = tape_of(a);
  const auto& x = a.value();
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  auto out = tape.record(std::move(y), {a}, nullptr);
  if (out.requires_grad()) {
    Var<T> self = out;
    tape.set_backward(out, [a, self, df](Tape<T>& t, const Tensor<T>& g) {
      auto* ga = t.grad_buffer(a);
      if (ga == nullptr) return;
      auto xs2 = a.value().data();
      auto ys2 = self.value().data();
      auto gs = g.data();
      auto dst = ga->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gs[i] * df(xs2[i], ys2[i]);
    });
  }
  return out;
}

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <class T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> c(Shape{a.dim(0), b.dim(1)});
  mmap(c, a.dim(0), b.dim(1)).noalias() = cmap(a, a.dim(0), a.dim(1)) * cmap(b, b.dim(0), b.dim(1));
  return c;
}

template <class T>
Tensor<T> matmul_nt_values(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  Tensor<T> c(Shape{a.dim(0), b.dim(0)});
  mmap(c, a.dim(0), b.dim(0)).noalias() =
      cmap(a, a.dim(0), a.dim(1)) * cmap(b, b.dim(0), b.dim(1)).transpose();
  return c;
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  auto c = matmul_values(a.value(), b.value());
  return tape.record(std::move(c), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (auto* ga = t.grad_buffer(a)) {
      mmap(*ga, m, k).noalias() += cmap(g, m, n) * cmap(bv, k, n).transpose();
    }
    if (auto* gb = t.grad_buffer(b)) {
      mmap(*gb, k, n).noalias() += cmap(av, m, k).transpose() * cmap(g, m, n);
    }
  });
}

template <class T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  auto c = matmul_nt_values(a.value(), b.value());
  return tape.record(std::move(c), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    if (auto* ga = t.grad_buffer(a)) {
      mmap(*ga, m, k).noalias() += cmap(g, m, n) * cmap(bv, n, k);
    }
    if (auto* gb = t.grad_buffer(b)) {
      mmap(*gb, n, k).noalias() += cmap(g, m, n).transpose() * cmap(av, m, k);
    }
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  auto& tape = tape_of(a);
  require_matrix(a.value(), "transpose");
  const auto r = a.value().dim(0), c = a.value().dim(1);
  Tensor<T> y(Shape{c, r});
  mmap(y, c, r) = cmap(a.value(), r, c).transpose();
  return tape.record(std::move(y), {a}, [a, r, c](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) mmap(*ga, r, c) += cmap(g, c, r).transpose();
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  require_same(a.value(), b.value(), "add");
  Tensor<T> y(a.value().shape());
  auto as = a.value().data(), bs = b.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + bs[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  require_same(a.value(), b.value(), "sub");
  Tensor<T> y(a.value().shape());
  auto as = a.value().data(), bs = b.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] - bs[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (auto* gb = t.grad_buffer(b)) {
      auto d = gb->data();
      auto gs = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gs[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  require_same(a.value(), b.value(), "mul");
  Tensor<T> y(a.value().shape());
  auto as = a.value().data(), bs = b.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * bs[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    auto gs = g.data();
    if (auto* ga = t.grad_buffer(a)) {
      auto d = ga->data();
      auto bs2 = b.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * bs2[i];
    }
    if (auto* gb = t.grad_buffer(b)) {
      auto d = gb->data();
      auto as2 = a.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * as2[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  auto& tape = tape_of(a);
  Tensor<T> y(a.value().shape());
  auto as = a.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * s;
  return tape.record(std::move(y), {a}, [a, s](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      auto d = ga->data();
      auto gs = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * s;
    }
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  auto& tape = tape_of(a);
  Tensor<T> y(a.value().shape());
  auto as = a.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + s;
  return tape.record(std::move(y), {a}, [a](Tape<T>& t, const Tensor<T>& g) { t.accumulate(a, g); });
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, const Var<T>& s) {
  auto& tape = tape_of(a);
  if (s.value().numel() != 1) throw ShapeError("mul_scalar: expected a single-element multiplier");
  const T sv = s.value()[0];
  Tensor<T> y(a.value().shape());
  auto as = a.value().data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * sv;
  return tape.record(std::move(y), {a, s}, [a, s](Tape<T>& t, const Tensor<T>& g) {
    const T sv2 = s.value()[0];
    auto gs = g.data();
    if (auto* ga = t.grad_buffer(a)) {
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * sv2;
    }
    if (auto* gsb = t.grad_buffer(s)) {
      auto as2 = a.value().data();
      T acc{0};
      for (std::size_t i = 0; i < as2.size(); ++i) acc += gs[i] * as2[i];
      (*gsb)[0] += acc;
    }
  });
}

template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  auto& tape = tape_of(a);
  const auto cols = a.value().cols();
  if (row.value().numel() != cols) {
    throw ShapeError("add_row: row " + shape_str(row.value().shape()) + " vs " + shape_str(a.value().shape()));
  }
  const auto rows = a.value().rows();
  Tensor<T> y(a.value().shape());
  const T* ap = a.value().ptr();
  const T* rp = row.value().ptr();
  T* yp = y.ptr();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) yp[r * cols + c] = ap[r * cols + c] + rp[c];
  return tape.record(std::move(y), {a, row}, [a, row, rows, cols](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (auto* gr = t.grad_buffer(row)) {
      const T* gp = g.ptr();
      T* d = gr->ptr();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) d[c] += gp[r * cols + c];
    }
  });
}

template <class T>
Var<T> mul_row(const Var<T>& a, const Var<T>& row) {
  auto& tape = tape_of(a);
  const auto cols = a.value().cols();
  if (row.value().numel() != cols) {
    throw ShapeError("mul_row: row " + shape_str(row.value().shape()) + " vs " + shape_str(a.value().shape()));
  }
  const auto rows = a.value().rows();
  Tensor<T> y(a.value().shape());
  const T* ap = a.value().ptr();
  const T* rp = row.value().ptr();
  T* yp = y.ptr();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) yp[r * cols + c] = ap[r * cols + c] * rp[c];
  return tape.record(std::move(y), {a, row}, [a, row, rows, cols](Tape<T>& t, const Tensor<T>& g) {
    const T* gp = g.ptr();
    if (auto* ga = t.grad_buffer(a)) {
      const T* rp2 = row.value().ptr();
      T* d = ga->ptr();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) d[r * cols + c] += gp[r * cols + c] * rp2[c];
    }
    if (auto* gr = t.grad_buffer(row)) {
      const T* ap2 = a.value().ptr();
      T* d = gr->ptr();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) d[c] += gp[r * cols + c] * ap2[r * cols + c];
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(a, [](T x) { return sigmoid_scalar(x); }, [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var<T> silu(const Var<T>& a) {
  return unary(
      a, [](T x) { return x * sigmoid_scalar(x); },
      [](T x, T) {
        const T s = sigmoid_scalar(x);
        return s * (T{1} + x * (T{1} - s));
      });
}

template <class T>
Var<T> silu_deriv(const Var<T>& a) {
  return unary(
      a,
      [](T x) {
        const T s = sigmoid_scalar(x);
        return s * (T{1} + x * (T{1} - s));
      },
      [](T x, T) {
        const T s = sigmoid_scalar(x);
        return s * (T{1} - s) * (T{2} + x * (T{1} - T{2} * s));
      });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <class T>
Var<T> sqrt(const Var<T>& a) {
  return unary(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return y > T{0} ? T{0.5} / y : std::numeric_limits<T>::infinity(); });
}

template <class T>
Var<T> reciprocal(const Var<T>& a) {
  return unary(a, [](T x) { return T{1} / x; }, [](T, T y) { return -y * y; });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return unary(
      a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T{1} : T{0}; });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  auto& tape = tape_of(a);
  T acc{0};
  for (T v : a.value().data()) acc += v;
  return tape.record(Tensor<T>::scalar(acc), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      const T gv = g[0];
      for (T& d : ga->data()) d += gv;
    }
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const auto n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  return mean(square(sub(a, b)));
}

template <class T>
Var<T> softmax_lastdim(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto cols = x.value().cols();
  if (cols < 1) throw ShapeError("softmax over an empty last dimension");
  const auto rows = x.value().rows();
  Tensor<T> y(x.value().shape());
  const T* xp = x.value().ptr();
  T* yp = y.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * cols;
    T* yr = yp + r * cols;
    T mx = xr[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    if (std::isnan(mx)) {
      for (std::int64_t c = 0; c < cols; ++c) yr[c] = std::numeric_limits<T>::quiet_NaN();
      continue;
    }
    T s{0};
    for (std::int64_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      s += yr[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) yr[c] /= s;
  }
  auto out = tape.record(std::move(y), {x}, nullptr);
  if (out.requires_grad()) {
    tape.set_backward(out, [x, out, rows, cols](Tape<T>& t, const Tensor<T>& g) {
      auto* gx = t.grad_buffer(x);
      if (gx == nullptr) return;
      const T* yp2 = out.value().ptr();
      const T* gp = g.ptr();
      T* d = gx->ptr();
      for (std::int64_t r = 0; r < rows; ++r) {
        T dot{0};
        for (std::int64_t c = 0; c < cols; ++c) dot += gp[r * cols + c] * yp2[r * cols + c];
        for (std::int64_t c = 0; c < cols; ++c) d[r * cols + c] += yp2[r * cols + c] * (gp[r * cols + c] - dot);
      }
    });
  }
  return out;
}

template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  auto& tape = tape_of(x);
  const auto cols = x.value().cols();
  const auto rows = x.value().rows();
  if (gain.value().numel() != cols || bias.value().numel() != cols) {
    throw ShapeError("layernorm: gain/bias must match last dimension of " + shape_str(x.value().shape()));
  }
  Tensor<T> y(x.value().shape());
  std::vector<T> xhat(static_cast<std::size_t>(rows * cols));
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const T* xp = x.value().ptr();
  const T* gp = gain.value().ptr();
  const T* bp = bias.value().ptr();
  T* yp = y.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * cols;
    T mu{0};
    for (std::int64_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<T>(cols);
    T var{0};
    for (std::int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(cols);
    const T rs = T{1} / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t c = 0; c < cols; ++c) {
      const T h = (xr[c] - mu) * rs;
      xhat[static_cast<std::size_t>(r * cols + c)] = h;
      yp[r * cols + c] = h * gp[c] + bp[c];
    }
  }
  return tape.record(
      std::move(y), {x, gain, bias},
      [x, gain, bias, rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, const Tensor<T>& g) {
        const T* gp2 = g.ptr();
        if (auto* gg = t.grad_buffer(gain)) {
          T* d = gg->ptr();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) d[c] += gp2[r * cols + c] * xhat[static_cast<std::size_t>(r * cols + c)];
        }
        if (auto* gb = t.grad_buffer(bias)) {
          T* d = gb->ptr();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) d[c] += gp2[r * cols + c];
        }
        if (auto* gx = t.grad_buffer(x)) {
          const T* gain_p = gain.value().ptr();
          T* d = gx->ptr();
          std::vector<T> dxh(static_cast<std::size_t>(cols));
          for (std::int64_t r = 0; r < rows; ++r) {
            T m1{0}, m2{0};
            for (std::int64_t c = 0; c < cols; ++c) {
              const T v = gp2[r * cols + c] * gain_p[c];
              dxh[static_cast<std::size_t>(c)] = v;
              m1 += v;
              m2 += v * xhat[static_cast<std::size_t>(r * cols + c)];
            }
            m1 /= static_cast<T>(cols);
            m2 /= static_cast<T>(cols);
            const T rs = rstd[static_cast<std::size_t>(r)];
            for (std::int64_t c = 0; c < cols; ++c) {
              d[r * cols + c] += rs * (dxh[static_cast<std::size_t>(c)] - m1 - xhat[static_cast<std::size_t>(r * cols + c)] * m2);
            }
          }
        }
      });
}

template <class T>
Var<T> swiglu_mlp(const Var<T>& x, const Var<T>& gate_w, const Var<T>& up_w, const Var<T>& down_w) {
  if (gate_w.value().rank() != 2 || up_w.value().shape() != gate_w.value().shape() ||
      down_w.value().rank() != 2 || down_w.value().dim(1) != gate_w.value().dim(0) ||
      x.value().cols() != gate_w.value().dim(1)) {
    throw ShapeError("swiglu_mlp: weights " + shape_str(gate_w.value().shape()) + ", " +
                     shape_str(up_w.value().shape()) + ", " + shape_str(down_w.value().shape()) +
                     " do not chain for input " + shape_str(x.value().shape()));
  }
  auto gated = mul(silu(matmul_nt(x, gate_w)), matmul_nt(x, up_w));
  return matmul_nt(gated, down_w);
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  auto& tape = tape_of(parts[0]);
  const auto rows = parts[0].value().rows();
  std::int64_t total = 0;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().dim(0) != rows) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.value().dim(1));
    total += p.value().dim(1);
  }
  Tensor<T> y(Shape{rows, total});
  std::int64_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const T* src = parts[i].value().ptr();
    const auto w = widths[i];
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy(src + r * w, src + (r + 1) * w, y.ptr() + r * total + off);
    off += w;
  }
  std::vector<Var<T>> ps(parts.begin(), parts.end());
  return tape.record(std::move(y), ps, [ps, widths, rows, total](Tape<T>& t, const Tensor<T>& g) {
    std::int64_t o = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto w = widths[i];
      if (auto* gp = t.grad_buffer(ps[i])) {
        T* d = gp->ptr();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < w; ++c) d[r * w + c] += g.ptr()[r * total + o + c];
      }
      o += w;
    }
  });
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  auto& tape = tape_of(parts[0]);
  const auto cols = parts[0].value().cols();
  std::int64_t total = 0;
  std::vector<std::int64_t> heights;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw ShapeError("concat_rows: column counts differ");
    heights.push_back(p.value().rows());
    total += p.value().rows();
  }
  Tensor<T> y(Shape{total, cols});
  std::int64_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy(parts[i].value().ptr(), parts[i].value().ptr() + heights[i] * cols, y.ptr() + off * cols);
    off += heights[i];
  }
  std::vector<Var<T>> ps(parts.begin(), parts.end());
  return tape.record(std::move(y), ps, [ps, heights, cols](Tape<T>& t, const Tensor<T>& g) {
    std::int64_t o = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (auto* gp = t.grad_buffer(ps[i])) {
        T* d = gp->ptr();
        for (std::int64_t j = 0; j < heights[i] * cols; ++j) d[j] += g.ptr()[o * cols + j];
      }
      o += heights[i];
    }
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::int64_t begin, std::int64_t end) {
  auto& tape = tape_of(a);
  require_matrix(a.value(), "slice_cols");
  const auto rows = a.value().dim(0), cols = a.value().dim(1);
  if (begin < 0 || end > cols || begin >= end) throw ShapeError("slice_cols: bad range");
  const auto w = end - begin;
  Tensor<T> y(Shape{rows, w});
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy(a.value().ptr() + r * cols + begin, a.value().ptr() + r * cols + end, y.ptr() + r * w);
  return tape.record(std::move(y), {a}, [a, begin, rows, cols, w](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < w; ++c) ga->ptr()[r * cols + begin + c] += g.ptr()[r * w + c];
    }
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, std::int64_t begin, std::int64_t end) {
  auto& tape = tape_of(a);
  const auto rows = a.value().rows(), cols = a.value().cols();
  if (begin < 0 || end > rows || begin >= end) throw ShapeError("slice_rows: bad range");
  Tensor<T> y(Shape{end - begin, cols});
  std::copy(a.value().ptr() + begin * cols, a.value().ptr() + end * cols, y.ptr());
  return tape.record(std::move(y), {a}, [a, begin, end, cols](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::int64_t j = 0; j < (end - begin) * cols; ++j) ga->ptr()[begin * cols + j] += g.ptr()[j];
    }
  });
}

template <class T>
Var<T> gather_rows(const Var<T>& a, std::span<const std::int64_t> index) {
  auto& tape = tape_of(a);
  const auto rows = a.value().rows(), cols = a.value().cols();
  const auto n = static_cast<std::int64_t>(index.size());
  Tensor<T> y(Shape{n, cols});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = index[static_cast<std::size_t>(i)];
    if (r < 0 || r >= rows) throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range");
    std::copy(a.value().ptr() + r * cols, a.value().ptr() + (r + 1) * cols, y.ptr() + i * cols);
  }
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return tape.record(std::move(y), {a}, [a, idx = std::move(idx), cols](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* d = ga->ptr() + idx[i] * cols;
        const T* s = g.ptr() + static_cast<std::int64_t>(i) * cols;
        for (std::int64_t c = 0; c < cols; ++c) d[c] += s[c];
      }
    }
  });
}

template <class T>
Var<T> put_rows(const Var<T>& base, std::span<const std::int64_t> index, const Var<T>& values) {
  auto& tape = tape_of(base);
  const auto rows = base.value().rows(), cols = base.value().cols();
  if (values.value().cols() != cols || values.value().rows() != static_cast<std::int64_t>(index.size())) {
    throw ShapeError("put_rows: values " + shape_str(values.value().shape()) + " for " +
                     std::to_string(index.size()) + " rows of width " + std::to_string(cols));
  }
  std::unordered_set<std::int64_t> seen;
  for (auto r : index) {
    if (r < 0 || r >= rows) throw ShapeError("put_rows: index out of range");
    if (!seen.insert(r).second) throw ContractError("put_rows: duplicate row index");
  }
  Tensor<T> y = base.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::copy(values.value().ptr() + static_cast<std::int64_t>(i) * cols,
              values.value().ptr() + static_cast<std::int64_t>(i + 1) * cols, y.ptr() + index[i] * cols);
  }
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return tape.record(std::move(y), {base, values}, [base, values, idx = std::move(idx), cols](Tape<T>& t, const Tensor<T>& g) {
    if (auto* gb = t.grad_buffer(base)) {
      Tensor<T> masked = g;
      for (auto r : idx) std::fill(masked.ptr() + r * cols, masked.ptr() + (r + 1) * cols, T{0});
      auto d = gb->data();
      auto s = masked.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
    if (auto* gv = t.grad_buffer(values)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* d = gv->ptr() + static_cast<std::int64_t>(i) * cols;
        const T* s = g.ptr() + idx[i] * cols;
        for (std::int64_t c = 0; c < cols; ++c) d[c] += s[c];
      }
    }
  });
}

template <class T>
Var<T> segment_mean(const Var<T>& a, std::span<const std::int64_t> offsets) {
  auto& tape = tape_of(a);
  const auto rows = a.value().rows(), cols = a.value().cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ContractError("segment_mean: offsets must run from 0 to the row count");
  }
  const auto groups = static_cast<std::int64_t>(offsets.size()) - 1;
  Tensor<T> y(Shape{groups, cols});
  for (std::int64_t g = 0; g < groups; ++g) {
    const auto b = offsets[static_cast<std::size_t>(g)], e = offsets[static_cast<std::size_t>(g + 1)];
    if (e <= b) throw ContractError("segment_mean: empty segment");
    const T inv = T{1} / static_cast<T>(e - b);
    for (auto r = b; r < e; ++r)
      for (std::int64_t c = 0; c < cols; ++c) y.ptr()[g * cols + c] += a.value().ptr()[r * cols + c] * inv;
  }
  std::vector<std::int64_t> offs(offsets.begin(), offsets.end());
  return tape.record(std::move(y), {a}, [a, offs = std::move(offs), cols](Tape<T>& t, const Tensor<T>& g) {
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
        const T inv = T{1} / static_cast<T>(offs[s + 1] - offs[s]);
        for (auto r = offs[s]; r < offs[s + 1]; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            ga->ptr()[r * cols + c] += g.ptr()[static_cast<std::int64_t>(s) * cols + c] * inv;
      }
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  auto& tape = tape_of(a);
  auto y = a.value().reshaped(std::move(shape));
  return tape.record(std::move(y), {a}, [a](Tape<T>& t, const Tensor<T>& g) { t.accumulate(a, g); });
}

template <class T>
Var<T> detach(const Var<T>& a) {
  return tape_of(a).constant(a.value());
}

#define SPLATEDIT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul_values(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul_nt_values(const Tensor<T>&, const Tensor<T>&);                       \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                       \
  template Var<T> transpose(const Var<T>&);                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> add_scalar(const Var<T>&, T);                                                  \
  template Var<T> mul_scalar(const Var<T>&, const Var<T>&);                                      \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul_row(const Var<T>&, const Var<T>&);                                         \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> silu(const Var<T>&);                                                           \
  template Var<T> silu_deriv(const Var<T>&);                                                     \
  template Var<T> tanh(const Var<T>&);                                                           \
  template Var<T> exp(const Var<T>&);                                                            \
  template Var<T> square(const Var<T>&);                                                         \
  template Var<T> sqrt(const Var<T>&);                                                           \
  template Var<T> reciprocal(const Var<T>&);                                                     \
  template Var<T> clamp(const Var<T>&, T, T);                                                    \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> mse(const Var<T>&, const Var<T>&);                                             \
  template Var<T> softmax_lastdim(const Var<T>&);                                                \
  template Var<T> layernorm(const Var<T>&, const Var<T>&, const Var<T>&, T);                     \
  template Var<T> swiglu_mlp(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);        \
  template Var<T> concat_cols(std::span<const Var<T>>);                                          \
  template Var<T> concat_rows(std::span<const Var<T>>);                                          \
  template Var<T> slice_cols(const Var<T>&, std::int64_t, std::int64_t);                         \
  template Var<T> slice_rows(const Var<T>&, std::int64_t, std::int64_t);                         \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::int64_t>);                     \
  template Var<T> put_rows(const Var<T>&, std::span<const std::int64_t>, const Var<T>&);         \
  template Var<T> segment_mean(const Var<T>&, std::span<const std::int64_t>);                    \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> detach(const Var<T>&);

SPLATEDIT_INSTANTIATE_OPS(float)
SPLATEDIT_INSTANTIATE_OPS(double)

#undef SPLATEDIT_INSTANTIATE_OPS

}  // namespace splatedit::ad
