#pragma once

// Input-transformation defenses: JPEG, bit-depth reduction, median smoothing
// and non-local-means denoising.

#include <algorithm>
#include <opencv2/photo.hpp>
#include <string>
#include <vector>

#include "semadv/imaging/io.hpp"

namespace semadv::defenses {

inline RgbImage jpeg_defense(const RgbImage& img, int quality = 75) { return io::jpeg_roundtrip(img, quality); }

/// x -> round(x * (2^bits - 1)) / (2^bits - 1).
inline RgbImage bit_depth_squeeze(const RgbImage& img, int bits) {
  if (bits < 1 || bits > 8) throw Error("bit_depth_squeeze: bits must be in [1,8], got " + std::to_string(bits));
  const double levels = double((1 << bits) - 1);
  RgbImage out = img;
  for (double& v : out.tensor().data()) v = std::round(v * levels) / levels;
  return out;
}

/// Per-channel sliding-window median with half-sample reflective borders.
/// Even windows span offsets [-w/2, w/2 - 1] and take the upper median, the
/// scipy.ndimage.median_filter convention used by feature squeezing.
inline RgbImage median_filter(const RgbImage& img, std::size_t wh, std::size_t ww) {
  if (wh == 0 || ww == 0) throw Error("median_filter: window must be non-empty");
  const std::size_t H = img.height(), W = img.width();
  auto reflect = [](std::ptrdiff_t i, std::size_t n) {
    const auto N = std::ptrdiff_t(n), period = 2 * N;
    i %= period;
    if (i < 0) i += period;
    return std::size_t(i < N ? i : period - 1 - i);
  };
  const auto oy = std::ptrdiff_t(wh / 2), ox = std::ptrdiff_t(ww / 2);
  RgbImage out(H, W);
  std::vector<double> win(wh * ww);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t k = 0;
        for (std::size_t dy = 0; dy < wh; ++dy)
          for (std::size_t dx = 0; dx < ww; ++dx)
            win[k++] = img.at(reflect(std::ptrdiff_t(y + dy) - oy, H), reflect(std::ptrdiff_t(x + dx) - ox, W), c);
        std::nth_element(win.begin(), win.begin() + std::ptrdiff_t(win.size() / 2), win.end());
        out.at(y, x, c) = win[win.size() / 2];
      }
  return out;
}

/// OpenCV non-local means on the 8-bit image; `strength` is h (and hColor) on
/// the 0..255 scale.
inline RgbImage nlm_denoise(const RgbImage& img, int search = 11, int patch = 3, double strength = 4.0) {
  if (search < 1 || patch < 1 || search % 2 == 0 || patch % 2 == 0)
    throw Error("nlm_denoise: search and patch windows must be odd and positive");
  cv::Mat dst;
  cv::fastNlMeansDenoisingColored(io::to_bgr8(img), dst, float(strength), float(strength), patch, search);
  return io::from_bgr8(dst);
}

}  // namespace semadv::defenses
