#pragma once

// Cross-layer texture statistics and the std-normalised texture loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semadv/models/feature_extractor.hpp"

namespace semadv::tadv {

using LayerPair = std::pair<std::string, std::string>;

inline std::vector<LayerPair> adjacent_pairs() {
  return {{"R11", "R21"}, {"R21", "R31"}, {"R31", "R41"}, {"R41", "R51"}};
}

enum class SourceStrategy { Random, RandomTarget, NearestTarget };

inline SourceStrategy parse_strategy(const std::string& s) {
  if (s == "random") return SourceStrategy::Random;
  if (s == "random-target") return SourceStrategy::RandomTarget;
  if (s == "nearest-target") return SourceStrategy::NearestTarget;
  throw Error("unknown texture source strategy '" + s + "'");
}

inline std::string to_string(SourceStrategy s) {
  switch (s) {
    case SourceStrategy::Random: return "random";
    case SourceStrategy::RandomTarget: return "random-target";
    case SourceStrategy::NearestTarget: return "nearest-target";
  }
  return "unknown";
}

struct TadvConfig {
  double alpha = 250.0;   // texture weight
  double beta = 1e-3;     // adversarial cross-entropy weight
  int iters = 1;          // L-BFGS rounds
  int steps_per_iter = 14;
  double conf_stop = 0.9;  // checked between rounds
  std::vector<LayerPair> layer_pairs = adjacent_pairs();
  SourceStrategy source_strategy = SourceStrategy::NearestTarget;
  std::uint64_t seed = 0;
  double std_eps = 1e-8;

  void validate() const {
    if (!(alpha > 0.0)) throw Error("tadv: alpha must be positive");
    if (!(beta >= 0.0)) throw Error("tadv: beta must be non-negative");
    if (iters != 1 && iters != 3) throw Error("tadv: iters must be 1 or 3");
    if (steps_per_iter < 1) throw Error("tadv: steps_per_iter must be at least 1");
    if (layer_pairs.empty()) throw Error("tadv: no layer pairs");
  }
};

/// Cross-layer Gram matrix of two feature maps.
struct GramMatrix {
  Tensor values;  // C_m x C_n
  LayerPair layers;
};

/// G_ij = sum_p f_m[i,p] * (U f_n)[j,p], where U is nearest-neighbour
/// upsampling of the coarser map f_n to f_m's resolution.
inline ad::Var cross_layer_gram(const ad::Var& f_m, const ad::Var& f_n) {
  if (f_m->value.rank() != 3 || f_n->value.rank() != 3)
    throw Error("cross_layer_gram: feature maps must be C x H x W");
  const std::size_t Cm = f_m->shape()[0], Hm = f_m->shape()[1], Wm = f_m->shape()[2];
  const std::size_t Cn = f_n->shape()[0], Hn = f_n->shape()[1], Wn = f_n->shape()[2];
  if (Hn > Hm || Wn > Wm)
    throw Error("cross_layer_gram: layer n (" + std::to_string(Hn) + "x" + std::to_string(Wn) +
                ") must not be finer than layer m (" + std::to_string(Hm) + "x" + std::to_string(Wm) + ")");
  auto up = ad::upsample_nearest(f_n, Hm, Wm);
  return ad::matmul_nt(ad::reshape(f_m, {Cm, Hm * Wm}), ad::reshape(up, {Cn, Hm * Wm}));
}

inline GramMatrix cross_layer_gram(const Tensor& f_m, const Tensor& f_n, LayerPair layers = {}) {
  return {cross_layer_gram(ad::constant(f_m), ad::constant(f_n))->value, std::move(layers)};
}

/// Population standard deviation of all entries.
inline double entry_std(const Tensor& t) {
  double mean = 0.0;
  for (double v : t.data()) mean += v;
  mean /= double(t.size());
  double var = 0.0;
  for (double v : t.data()) var += (v - mean) * (v - mean);
  return std::sqrt(var / double(t.size()));
}

namespace detail {
inline std::vector<std::string> taps_of(const std::vector<LayerPair>& pairs) {
  std::vector<std::string> taps;
  for (const auto& [m, n] : pairs)
    for (const auto& t : {m, n})
      if (std::find(taps.begin(), taps.end(), t) == taps.end()) taps.push_back(t);
  return taps;
}
}  // namespace detail

/// Gram matrices of an image for every configured layer pair.
inline std::vector<GramMatrix> texture_stats(const models::FeatureExtractor& ex, const ad::Var& rgb,
                                             const std::vector<LayerPair>& pairs) {
  const auto taps = detail::taps_of(pairs);
  const auto feats = ex.features(rgb, taps);
  auto at = [&](const std::string& t) {
    return feats[std::size_t(std::find(taps.begin(), taps.end(), t) - taps.begin())];
  };
  std::vector<GramMatrix> out;
  for (const auto& pr : pairs) out.push_back({cross_layer_gram(at(pr.first), at(pr.second))->value, pr});
  return out;
}

/// sum over pairs (1/C_n^2) sum_ij (G_v - G_t)^2 / (std(G_v) + eps).
/// std(G_v) is a scalar over the victim's Gram entries and is treated as a
/// constant (no gradient flows through it).
inline ad::Var texture_loss(const models::FeatureExtractor& ex, const ad::Var& victim,
                            const std::vector<GramMatrix>& source_stats, const TadvConfig& cfg) {
  if (source_stats.size() != cfg.layer_pairs.size())
    throw Error("texture_loss: source statistics do not match the configured layer pairs");
  const auto taps = detail::taps_of(cfg.layer_pairs);
  const auto feats = ex.features(victim, taps);
  for (const auto& f : feats)
    for (double v : f->value.data())
      if (!std::isfinite(v)) throw Error("texture_loss: non-finite features");
  auto at = [&](const std::string& t) {
    return feats[std::size_t(std::find(taps.begin(), taps.end(), t) - taps.begin())];
  };
  std::vector<ad::Var> terms;
  for (std::size_t k = 0; k < cfg.layer_pairs.size(); ++k) {
    const auto& [m, n] = cfg.layer_pairs[k];
    auto g_v = cross_layer_gram(at(m), at(n));
    const auto& g_t = source_stats[k].values;
    if (g_v->shape() != g_t.shape())
      throw Error("texture_loss: Gram shape mismatch for pair " + m + "/" + n);
    const double cn = double(g_v->shape()[1]);
    const double denom = cn * cn * (entry_std(g_v->value) + cfg.std_eps);
    terms.push_back(ad::scale(ad::sum_squares(ad::sub(g_v, ad::constant(g_t))), 1.0 / denom));
  }
  return ad::add_n(terms);
}

/// Convenience overload computing the source statistics on the fly.
inline double texture_loss(const RgbImage& victim, const RgbImage& source, const models::FeatureExtractor& ex,
                           const TadvConfig& cfg) {
  const auto stats = texture_stats(ex, ad::constant(source.tensor()), cfg.layer_pairs);
  return ad::scalar(texture_loss(ex, ad::constant(victim.tensor()), stats, cfg));
}

}  // namespace semadv::tadv
