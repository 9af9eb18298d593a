#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "semadv/core/tensor.hpp"

namespace semadv {

/// sRGB image with values in [0,1], stored channel-major (3 x H x W).
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(std::size_t height, std::size_t width, double fill = 0.0)
      : pixels_({3, height, width}, fill) {
    validate();
  }
  explicit RgbImage(Tensor chw) : pixels_(std::move(chw)) { validate(); }

  std::size_t height() const { return pixels_.dim(1); }
  std::size_t width() const { return pixels_.dim(2); }
  std::size_t pixel_count() const { return height() * width(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_.at(c, y, x); }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_.at(c, y, x); }

  const Tensor& tensor() const noexcept { return pixels_; }
  Tensor& tensor() noexcept { return pixels_; }

  /// Clamps all values into [0,1] in place.
  void clamp() {
    for (double& v : pixels_.data()) v = std::min(1.0, std::max(0.0, v));
  }

  friend bool operator==(const RgbImage& a, const RgbImage& b) { return a.pixels_ == b.pixels_; }

 private:
  void validate() const {
    if (pixels_.rank() != 3 || pixels_.dim(0) != 3 || pixels_.dim(1) == 0 || pixels_.dim(2) == 0)
      throw Error("RgbImage: expected a non-empty 3 x H x W tensor, got " +
                  to_string(pixels_.shape()));
    for (double v : pixels_.data())
      if (!(v >= 0.0 && v <= 1.0))
        throw Error("RgbImage: pixel value " + std::to_string(v) + " outside [0,1]");
  }

  Tensor pixels_;
};

/// CIELAB image: L in [0,100] (1 x H x W) and ab (2 x H x W).
struct LabImage {
  Tensor L;
  Tensor ab;

  std::size_t height() const { return L.dim(1); }
  std::size_t width() const { return L.dim(2); }

  /// (L, a, b) stacked into one 3 x H x W tensor.
  Tensor stacked() const {
    validate();
    std::vector<double> v(L.data().begin(), L.data().end());
    v.insert(v.end(), ab.data().begin(), ab.data().end());
    return Tensor({3, height(), width()}, std::move(v));
  }

  void validate() const {
    if (L.rank() != 3 || L.dim(0) != 1 || ab.rank() != 3 || ab.dim(0) != 2 ||
        L.dim(1) != ab.dim(1) || L.dim(2) != ab.dim(2))
      throw Error("LabImage: inconsistent channel shapes " + to_string(L.shape()) + " / " +
                  to_string(ab.shape()));
  }
};

namespace color {

// sRGB primaries with the D65 reference white.
inline constexpr std::array<double, 3> kWhiteD65{0.95047, 1.0, 1.08883};
inline constexpr double kRgbToXyz[3][3] = {{0.412453, 0.357580, 0.180423},
                                           {0.212671, 0.715160, 0.072169},
                                           {0.019334, 0.119193, 0.950227}};
inline constexpr double kXyzToRgb[3][3] = {{3.240481340, -1.537151516, -0.498536326},
                                           {-0.969254949, 1.875990000, 0.041555930},
                                           {0.055646640, -0.204041338, 1.057311069}};
inline constexpr double kDelta = 6.0 / 29.0;

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}
inline double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}
inline double linear_to_srgb_deriv(double c) {
  return c <= 0.0031308 ? 12.92 : 1.055 / 2.4 * std::pow(c, 1.0 / 2.4 - 1.0);
}
inline double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
inline double lab_finv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}
inline double lab_finv_deriv(double t) { return t > kDelta ? 3.0 * t * t : 3.0 * kDelta * kDelta; }

inline std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double xyz = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    f[i] = lab_f(xyz / kWhiteD65[std::size_t(i)]);
  }
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

/// Unclamped linear-light RGB for a Lab triple.
inline std::array<double, 3> lab_to_linear_rgb(double L, double a, double b) {
  const double fy = (L + 16.0) / 116.0;
  const double f[3] = {fy + a / 500.0, fy, fy - b / 200.0};
  double xyz[3];
  for (int i = 0; i < 3; ++i) xyz[i] = kWhiteD65[std::size_t(i)] * lab_finv(f[i]);
  std::array<double, 3> lin{};
  for (int i = 0; i < 3; ++i)
    lin[std::size_t(i)] = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
  return lin;
}

inline std::array<double, 3> lab_to_rgb(double L, double a, double b) {
  auto lin = lab_to_linear_rgb(L, a, b);
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i)
    out[i] = std::min(1.0, std::max(0.0, linear_to_srgb(std::max(0.0, lin[i]))));
  return out;
}

}  // namespace color

inline LabImage rgb_to_lab(const RgbImage& img) {
  const std::size_t H = img.height(), W = img.width();
  LabImage out{Tensor({1, H, W}), Tensor({2, H, W})};
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      auto lab = color::rgb_to_lab(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      out.L.at(0, y, x) = std::min(100.0, std::max(0.0, lab[0]));
      out.ab.at(0, y, x) = lab[1];
      out.ab.at(1, y, x) = lab[2];
    }
  return out;
}

/// Inverse conversion; out-of-gamut colours are clamped into [0,1].
inline RgbImage lab_to_rgb(const LabImage& img) {
  img.validate();
  const std::size_t H = img.height(), W = img.width();
  Tensor out({3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      auto rgb = color::lab_to_rgb(img.L.at(0, y, x), img.ab.at(0, y, x), img.ab.at(1, y, x));
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = rgb[c];
    }
  return RgbImage(std::move(out));
}

/// Discrete Gaussian kernel truncated at radius round(4 sigma), normalised to
/// unit sum.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_kernel: sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(4.0 * sigma + 0.5);
  std::vector<double> k(std::size_t(2 * radius + 1));
  double s = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i)
    s += k[std::size_t(i + radius)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
  for (double& v : k) v /= s;
  return k;
}

namespace detail {
/// Half-sample symmetric reflection (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = std::ptrdiff_t(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= std::ptrdiff_t(n)) m = period - 1 - m;
  return std::size_t(m);
}
}  // namespace detail

/// Separable Gaussian smoothing of an H x W channel with reflective borders.
inline Tensor gaussian_blur(const Tensor& channel, double sigma) {
  if (channel.rank() != 2) throw Error("gaussian_blur: expected an H x W channel");
  const auto k = gaussian_kernel(sigma);
  const auto radius = std::ptrdiff_t(k.size() / 2);
  const std::size_t H = channel.dim(0), W = channel.dim(1);
  Tensor tmp({H, W}), out({H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t j = -radius; j <= radius; ++j)
        s += k[std::size_t(j + radius)] *
             channel[y * W + detail::reflect_index(std::ptrdiff_t(x) + j, W)];
      tmp[y * W + x] = s;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t j = -radius; j <= radius; ++j)
        s += k[std::size_t(j + radius)] *
             tmp[detail::reflect_index(std::ptrdiff_t(y) + j, H) * W + x];
      out[y * W + x] = s;
    }
  return out;
}

/// Perturbation size between two images on the [0,1] scale.
struct NormReport {
  double l0 = 0.0;    // fraction of pixels with any channel changed by more than 1/255
  double l2 = 0.0;    // root-mean-square difference over all values
  double linf = 0.0;  // largest absolute difference
};

inline NormReport lp_metrics(const RgbImage& orig, const RgbImage& adv) {
  if (orig.height() != adv.height() || orig.width() != adv.width())
    throw Error("lp_metrics: dimension mismatch " + to_string(orig.tensor().shape()) + " vs " +
                to_string(adv.tensor().shape()));
  const std::size_t H = orig.height(), W = orig.width();
  constexpr double kThreshold = 1.0 / 255.0;
  NormReport r;
  std::size_t changed = 0;
  double sq = 0.0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      bool any = false;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = std::abs(adv.at(y, x, c) - orig.at(y, x, c));
        sq += d * d;
        r.linf = std::max(r.linf, d);
        any = any || d > kThreshold;
      }
      changed += any ? 1 : 0;
    }
  r.l0 = double(changed) / double(H * W);
  r.l2 = std::sqrt(sq / double(3 * H * W));
  return r;
}

}  // namespace semadv
