#pragma once

#include <random>

#include "semadv/cadv/clusters.hpp"
#include "semadv/models/colorizer.hpp"

namespace semadv::cadv {

using models::HintSet;

/// Draws cfg.n_hints pixel positions uniformly without replacement from the
/// union of the cfg.k clusters with the lowest mean entropy, and copies the
/// ground-truth AB values there. The mask is 1 exactly at those positions.
inline HintSet sample_hints(ClusterMap clusters, const EntropyMap& entropy, const Tensor& gt_ab,
                            const CadvConfig& cfg) {
  if (gt_ab.rank() != 3 || gt_ab.dim(0) != 2 || gt_ab.dim(1) != clusters.height ||
      gt_ab.dim(2) != clusters.width)
    throw Error("sample_hints: ground-truth AB " + to_string(gt_ab.shape()) + " does not match the cluster map");
  attach_entropy(clusters, entropy);
  if (cfg.k == 0 || cfg.k > clusters.effective_clusters())
    throw Error("sample_hints: k=" + std::to_string(cfg.k) + " exceeds the " +
                std::to_string(clusters.effective_clusters()) + " effective clusters");
  const auto order = clusters_by_entropy(clusters);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < cfg.k; ++i)
    pool.insert(pool.end(), clusters.members[order[i]].begin(), clusters.members[order[i]].end());
  std::sort(pool.begin(), pool.end());
  if (cfg.n_hints > pool.size())
    throw Error("sample_hints: " + std::to_string(cfg.n_hints) + " hints requested but the " +
                std::to_string(cfg.k) + " lowest-entropy clusters hold only " + std::to_string(pool.size()) +
                " pixels (short by " + std::to_string(cfg.n_hints - pool.size()) + ")");

  const std::size_t H = clusters.height, W = clusters.width, P = H * W;
  HintSet hints = HintSet::empty(H, W);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.n_hints; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    const std::size_t p = pool[i];
    hints.positions.emplace_back(p / W, p % W);
    hints.mask[p] = 1.0;
    hints.hint_ab[p] = gt_ab[p];
    hints.hint_ab[P + p] = gt_ab[P + p];
  }
  return hints;
}

/// Hints at every pixel (mask all ones), used by the caption attack.
inline HintSet full_hints(const Tensor& gt_ab) {
  HintSet h{gt_ab, Tensor({1, gt_ab.dim(1), gt_ab.dim(2)}, 1.0), {}};
  return h;
}

}  // namespace semadv::cadv
