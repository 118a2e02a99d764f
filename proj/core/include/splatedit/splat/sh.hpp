// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

// Real spherical-harmonics basis in the polynomial form used by reference
// splatting renderers. Degree 4 extends the same sign convention.
namespace splatedit::splat {

inline constexpr int kMaxShDegree = 4;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

namespace sh_const {
inline constexpr double C0 = 0.28209479177387814;
inline constexpr double C1 = 0.4886025119029199;
inline constexpr std::array<double, 5> C2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                             -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> C3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                             0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                             -0.5900435899266435};
inline constexpr std::array<double, 9> C4 = {2.5033429417967046,  -1.7701307697799304, 0.9461746957575601,
                                             -0.6690465435572892, 0.10578554691520431, -0.6690465435572892,
                                             0.47308734787878004, -1.7701307697799304, 0.6258357354491761};
}  // namespace sh_const

/// Writes sh_coeff_count(degree) basis values for unit direction (x, y, z).
/// S may be any arithmetic-like type (forward-mode duals are used for gradients).
template <class S>
void sh_basis(int degree, const S& x, const S& y, const S& z, S* out) {
  using namespace sh_const;
  out[0] = S(C0);
  if (degree < 1) return;
  out[1] = S(-C1) * y;
  out[2] = S(C1) * z;
  out[3] = S(-C1) * x;
  if (degree < 2) return;
  const S xx = x * x, yy = y * y, zz = z * z, xy = x * y, yz = y * z, xz = x * z;
  out[4] = S(C2[0]) * xy;
  out[5] = S(C2[1]) * yz;
  out[6] = S(C2[2]) * (S(2.0) * zz - xx - yy);
  out[7] = S(C2[3]) * xz;
  out[8] = S(C2[4]) * (xx - yy);
  if (degree < 3) return;
  out[9] = S(C3[0]) * y * (S(3.0) * xx - yy);
  out[10] = S(C3[1]) * xy * z;
  out[11] = S(C3[2]) * y * (S(4.0) * zz - xx - yy);
  out[12] = S(C3[3]) * z * (S(2.0) * zz - S(3.0) * xx - S(3.0) * yy);
  out[13] = S(C3[4]) * x * (S(4.0) * zz - xx - yy);
  out[14] = S(C3[5]) * z * (xx - yy);
  out[15] = S(C3[6]) * x * (xx - S(3.0) * yy);
  if (degree < 4) return;
  out[16] = S(C4[0]) * xy * (xx - yy);
  out[17] = S(C4[1]) * yz * (S(3.0) * xx - yy);
  out[18] = S(C4[2]) * xy * (S(7.0) * zz - S(1.0));
  out[19] = S(C4[3]) * yz * (S(7.0) * zz - S(3.0));
  out[20] = S(C4[4]) * (zz * (S(35.0) * zz - S(30.0)) + S(3.0));
  out[21] = S(C4[5]) * xz * (S(7.0) * zz - S(3.0));
  out[22] = S(C4[6]) * (xx - yy) * (S(7.0) * zz - S(1.0));
  out[23] = S(C4[7]) * xz * (xx - S(3.0) * yy);
  out[24] = S(C4[8]) * (xx * (xx - S(3.0) * yy) - yy * (S(3.0) * xx - yy));
}

/// Forward-mode dual with a 3-component tangent.
template <class T>
struct Dual3 {
  T v{};
  std::array<T, 3> d{};
  Dual3() = default;
  explicit Dual3(T value) : v(value) {}
  Dual3(T value, std::array<T, 3> tangent) : v(value), d(tangent) {}
  friend Dual3 operator+(const Dual3& a, const Dual3& b) {
    return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2]}};
  }
  friend Dual3 operator-(const Dual3& a, const Dual3& b) {
    return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
  }
  friend Dual3 operator*(const Dual3& a, const Dual3& b) {
    return {a.v * b.v,
            {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1], a.d[2] * b.v + a.v * b.d[2]}};
  }
};

/// Basis values Y[k] and their partials dY[3k + axis] w.r.t. the (unit)
/// direction components, treating x, y, z as independent.
template <class T>
void sh_basis_with_grad(int degree, T x, T y, T z, T* Y, T* dY) {
  Dual3<T> out[sh_coeff_count(kMaxShDegree)];
  sh_basis(degree, Dual3<T>(x, {T{1}, T{0}, T{0}}), Dual3<T>(y, {T{0}, T{1}, T{0}}),
           Dual3<T>(z, {T{0}, T{0}, T{1}}), out);
  for (int k = 0; k < sh_coeff_count(degree); ++k) {
    Y[k] = out[k].v;
    for (int a = 0; a < 3; ++a) dY[3 * k + a] = out[k].d[static_cast<std::size_t>(a)];
  }
}

}  // namespace splatedit::splat
