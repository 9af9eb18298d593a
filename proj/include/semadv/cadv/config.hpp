#pragma once

#include <cstdint>
#include <string>

#include "semadv/core/tensor.hpp"

namespace semadv::cadv {

struct CadvConfig {
  std::size_t k = 4;           // lowest-entropy clusters that hints are drawn from
  std::size_t n_hints = 50;
  double lr = 1e-4;            // Adam step on hints (AB / 110) and mask
  double conf_delta = 0.05;    // stop once |change in target probability| <= this
  int max_iters = 500;
  double sigma = 3.0;          // AB smoothing before clustering
  std::size_t n_clusters = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_clusters == 0) throw Error("cadv: n_clusters must be positive");
    if (k < 1 || k > n_clusters)
      throw Error("cadv: k=" + std::to_string(k) + " must be in [1, n_clusters=" +
                  std::to_string(n_clusters) + "]");
    if (!(lr > 0.0) || !(conf_delta > 0.0) || !(sigma > 0.0) || max_iters <= 0)
      throw Error("cadv: lr, conf_delta, sigma and max_iters must be positive");
  }
};

}  // namespace semadv::cadv
