#pragma once

#include <map>
#include <string>
#include <vector>

#include "semadv/models/classifier.hpp"

namespace semadv::models {

/// Texture feature extractor exposing the taps R11, R21, R31, R41 and R51.
class FeatureExtractor {
 public:
  static inline const std::vector<std::string> kTaps{"R11", "R21", "R31", "R41", "R51"};

  /// `taps` maps tap names to layer names of `net`; graph input is "image".
  FeatureExtractor(std::string tag, Network net, Preprocess pre,
                   std::map<std::string, std::string> taps)
      : tag_(std::move(tag)), net_(std::move(net)), pre_(pre), taps_(std::move(taps)) {
    for (const auto& t : kTaps)
      if (!taps_.count(t) || !net_.has_layer(taps_.at(t)))
        throw Error("feature extractor '" + tag_ + "' lacks tap " + t);
  }

  static FeatureExtractor from_network(Network net) {
    const auto& d = net.description();
    return FeatureExtractor(d.value("tag", std::string("extractor")), net,
                            Preprocess::from_json(d.at("input")),
                            d.at("taps").get<std::map<std::string, std::string>>());
  }

  const std::string& tag() const noexcept { return tag_; }
  const Preprocess& preprocess() const noexcept { return pre_; }
  const Network& network() const noexcept { return net_; }

  /// Feature maps (C x H x W) of the requested taps, in request order.
  std::vector<ad::Var> features(const ad::Var& rgb, const std::vector<std::string>& taps) const {
    std::vector<std::string> layers;
    for (const auto& t : taps) {
      auto it = taps_.find(t);
      if (it == taps_.end()) throw Error("unknown feature tap '" + t + "'");
      layers.push_back(it->second);
    }
    auto out = net_.forward({{"image", pre_.apply(rgb)}}, layers);
    std::vector<ad::Var> res;
    for (const auto& l : layers) res.push_back(out.at(l));
    return res;
  }

  /// Spatially average-pooled R51 activations.
  std::vector<double> embed(const RgbImage& img) const {
    const RgbImage in = io::resize(img, pre_.height, pre_.width);
    auto f = features(ad::constant(in.tensor()), {"R51"})[0];
    auto pooled = ad::global_avg_pool(f);
    return {pooled->value.data().begin(), pooled->value.data().end()};
  }

 private:
  std::string tag_;
  Network net_;
  Preprocess pre_;
  std::map<std::string, std::string> taps_;
};

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine_distance: length mismatch");
  if (a == b) return 0.0;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 0.0;
  if (aa == 0.0 || bb == 0.0) return 1.0;
  return 1.0 - ab / std::sqrt(aa * bb);
}

}  // namespace semadv::models
