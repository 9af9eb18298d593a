#pragma once

#include "semadv/core/autodiff.hpp"
#include "semadv/imaging/image.hpp"

namespace semadv::ad {

/// Differentiable CIELAB -> sRGB for a 3 x H x W tensor holding (L, a, b).
/// Output is clamped to [0,1]; clamped values carry zero gradient.
inline Var lab_to_rgb(const Var& lab) {
  if (lab->value.rank() != 3 || lab->shape()[0] != 3)
    throw Error("lab_to_rgb: expected 3 x H x W input, got " + to_string(lab->shape()));
  using namespace semadv::color;
  const std::size_t P = lab->shape()[1] * lab->shape()[2];
  Tensor out(lab->shape());
  std::vector<double> jac(9 * P);  // d rgb[i] / d lab[j], row-major per pixel
  for (std::size_t p = 0; p < P; ++p) {
    const double L = lab->value[p], a = lab->value[P + p], b = lab->value[2 * P + p];
    const double fy = (L + 16.0) / 116.0;
    const double f[3] = {fy + a / 500.0, fy, fy - b / 200.0};
    // d f / d (L,a,b)
    const double df[3][3] = {{1.0 / 116.0, 1.0 / 500.0, 0.0},
                             {1.0 / 116.0, 0.0, 0.0},
                             {1.0 / 116.0, 0.0, -1.0 / 200.0}};
    double xyz[3], dxyz[3][3];
    for (int i = 0; i < 3; ++i) {
      xyz[i] = kWhiteD65[std::size_t(i)] * lab_finv(f[i]);
      const double d = kWhiteD65[std::size_t(i)] * lab_finv_deriv(f[i]);
      for (int j = 0; j < 3; ++j) dxyz[i][j] = d * df[i][j];
    }
    for (int c = 0; c < 3; ++c) {
      double lin = 0.0, dlin[3] = {0.0, 0.0, 0.0};
      for (int k = 0; k < 3; ++k) {
        lin += kXyzToRgb[c][k] * xyz[k];
        for (int j = 0; j < 3; ++j) dlin[j] += kXyzToRgb[c][k] * dxyz[k][j];
      }
      double v, dv;
      if (lin <= 0.0) {
        v = 0.0;
        dv = 0.0;
      } else {
        v = linear_to_srgb(lin);
        dv = linear_to_srgb_deriv(lin);
        if (v >= 1.0) {
          v = 1.0;
          dv = 0.0;
        }
      }
      out[std::size_t(c) * P + p] = v;
      for (int j = 0; j < 3; ++j) jac[9 * p + std::size_t(3 * c + j)] = dv * dlin[j];
    }
  }
  return make_result(std::move(out), {lab}, [jac = std::move(jac), P](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = self.grad[c * P + p];
        if (d == 0.0) continue;
        for (std::size_t j = 0; j < 3; ++j) g[j * P + p] += d * jac[9 * p + 3 * c + j];
      }
  });
}

}  // namespace semadv::ad
