#pragma once

#include <cmath>

#include "semadv/core/tensor.hpp"

namespace semadv::cadv {

/// Per-pixel Shannon entropy of the colorizer's bin distribution.
struct EntropyMap {
  Tensor values;  // H x W
  std::size_t bins = 0;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
};

/// H = -sum_q p_q log(p_q) with 0 log 0 = 0. `log_base` <= 0 selects the
/// natural logarithm.
inline EntropyMap compute_entropy_map(const Tensor& dist, double log_base = 0.0) {
  if (dist.rank() != 3 || dist.dim(0) == 0)
    throw Error("compute_entropy_map: expected Q x H x W probabilities, got " + to_string(dist.shape()));
  const std::size_t Q = dist.dim(0), H = dist.dim(1), W = dist.dim(2), P = H * W;
  const double inv_log_base = log_base > 0.0 ? 1.0 / std::log(log_base) : 1.0;
  EntropyMap out{Tensor({H, W}), Q};
  for (std::size_t p = 0; p < P; ++p) {
    double total = 0.0, h = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      const double v = dist[q * P + p];
      if (!(v >= 0.0)) throw Error("compute_entropy_map: negative or NaN probability at pixel " + std::to_string(p));
      total += v;
      if (v > 0.0) h -= v * std::log(v);
    }
    if (std::abs(total - 1.0) > 1e-4)
      throw Error("compute_entropy_map: pixel " + std::to_string(p) + " distribution sums to " +
                  std::to_string(total));
    // Clamp rounding so the bounds 0 <= H <= log Q hold exactly.
    h = std::min(std::max(h, 0.0), std::log(double(Q)));
    out.values[p] = h * inv_log_base;
  }
  return out;
}

}  // namespace semadv::cadv
