#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "semadv/cadv/config.hpp"
#include "semadv/cadv/entropy.hpp"
#include "semadv/imaging/image.hpp"

namespace semadv::cadv {

/// Segmentation of the image by K-Means over smoothed AB values.
struct ClusterMap {
  std::size_t height = 0, width = 0;
  std::vector<std::size_t> assignment;              // per pixel, row-major
  std::vector<std::array<double, 2>> centroids;     // per effective cluster
  std::vector<std::vector<std::size_t>> members;    // flat pixel indices per cluster
  std::vector<double> mean_entropy;                 // filled by attach_entropy()

  std::size_t effective_clusters() const { return centroids.size(); }
};

struct KMeansOptions {
  int max_iters = 300;
  double tol = 1e-4;
};

namespace detail {

inline double sq_dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

/// Lloyd's algorithm from k-means++ seeds. Returns the centroids; seeding stops
/// early when every point already coincides with a chosen centre.
inline std::vector<std::array<double, 2>> kmeans(const std::vector<std::array<double, 2>>& pts,
                                                 std::size_t k, std::uint64_t seed,
                                                 const KMeansOptions& opt) {
  std::mt19937_64 rng(seed);
  std::vector<std::array<double, 2>> centres;
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  centres.push_back(pts[pick(rng)]);
  std::vector<double> d2(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = sq_dist(pts[i], centres[0]);
  while (centres.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng), acc = 0.0;
    std::size_t chosen = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      acc += d2[i];
      if (acc >= r && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    centres.push_back(pts[chosen]);
    for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = std::min(d2[i], sq_dist(pts[i], centres.back()));
  }

  std::vector<std::size_t> assign(pts.size(), 0);
  for (int it = 0; it < opt.max_iters; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centres.size(); ++c) {
        const double d = sq_dist(pts[i], centres[c]);
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    std::vector<std::array<double, 2>> next(centres.size(), {0.0, 0.0});
    std::vector<std::size_t> count(centres.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      next[assign[i]][0] += pts[i][0];
      next[assign[i]][1] += pts[i][1];
      ++count[assign[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < centres.size(); ++c) {
      if (count[c] == 0) {
        next[c] = centres[c];
        continue;
      }
      next[c][0] /= double(count[c]);
      next[c][1] /= double(count[c]);
      shift = std::max(shift, std::sqrt(sq_dist(next[c], centres[c])));
    }
    centres = std::move(next);
    if (shift <= opt.tol) break;
  }
  return centres;
}

}  // namespace detail

/// K-Means (k-means++ seeding, fixed seed) over the sigma-blurred AB values.
/// Coincident centroids are merged and empty clusters dropped, so the map may
/// hold fewer than cfg.n_clusters effective clusters.
inline ClusterMap cluster_ab(const LabImage& lab, const CadvConfig& cfg, const KMeansOptions& opt = {}) {
  lab.validate();
  if (cfg.n_clusters == 0) throw Error("cluster_ab: n_clusters must be positive");
  const std::size_t H = lab.height(), W = lab.width(), P = H * W;
  Tensor a_ch({H, W}), b_ch({H, W});
  std::copy(lab.ab.raw(), lab.ab.raw() + P, a_ch.raw());
  std::copy(lab.ab.raw() + P, lab.ab.raw() + 2 * P, b_ch.raw());
  const Tensor a_s = gaussian_blur(a_ch, cfg.sigma), b_s = gaussian_blur(b_ch, cfg.sigma);
  std::vector<std::array<double, 2>> pts(P);
  for (std::size_t p = 0; p < P; ++p) pts[p] = {a_s[p], b_s[p]};

  auto centres = detail::kmeans(pts, std::min(cfg.n_clusters, P), cfg.seed, opt);

  // Merge coincident centroids.
  std::vector<std::array<double, 2>> unique;
  for (const auto& c : centres) {
    bool dup = false;
    for (const auto& u : unique) dup = dup || detail::sq_dist(c, u) <= 1e-12;
    if (!dup) unique.push_back(c);
  }
  ClusterMap map;
  map.height = H;
  map.width = W;
  map.assignment.resize(P);
  std::vector<std::size_t> raw(P);
  std::vector<std::size_t> count(unique.size(), 0);
  for (std::size_t p = 0; p < P; ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < unique.size(); ++c) {
      const double d = detail::sq_dist(pts[p], unique[c]);
      if (d < best) {
        best = d;
        raw[p] = c;
      }
    }
    ++count[raw[p]];
  }
  // Drop empty clusters and renumber in order of first appearance.
  std::vector<std::size_t> remap(unique.size(), std::size_t(-1));
  for (std::size_t p = 0; p < P; ++p) {
    auto& r = remap[raw[p]];
    if (r == std::size_t(-1)) {
      r = map.centroids.size();
      map.centroids.push_back(unique[raw[p]]);
      map.members.emplace_back();
    }
    map.assignment[p] = r;
    map.members[r].push_back(p);
  }
  return map;
}

/// Fills ClusterMap::mean_entropy with the mean entropy of each cluster's pixels.
inline void attach_entropy(ClusterMap& map, const EntropyMap& entropy) {
  if (entropy.values.rank() != 2 || entropy.height() != map.height || entropy.width() != map.width)
    throw Error("attach_entropy: entropy map does not match the cluster map");
  map.mean_entropy.assign(map.effective_clusters(), 0.0);
  for (std::size_t c = 0; c < map.effective_clusters(); ++c) {
    double s = 0.0;
    for (auto p : map.members[c]) s += entropy.values[p];
    map.mean_entropy[c] = s / double(map.members[c].size());
  }
}

/// Cluster ids ordered by increasing mean entropy (ties by id).
inline std::vector<std::size_t> clusters_by_entropy(const ClusterMap& map) {
  if (map.mean_entropy.size() != map.effective_clusters())
    throw Error("clusters_by_entropy: mean entropies not attached");
  std::vector<std::size_t> ids(map.effective_clusters());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return map.mean_entropy[a] < map.mean_entropy[b]; });
  return ids;
}

}  // namespace semadv::cadv
