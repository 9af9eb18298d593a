#pragma once

#include <array>
#include <string>

#include "semadv/imaging/image.hpp"
#include "semadv/imaging/io.hpp"
#include "semadv/models/network.hpp"

namespace semadv::models {

/// Input contract of a model taking RGB images: spatial size and per-channel
/// normalisation (x - mean) / std applied to [0,1] pixels.
struct Preprocess {
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  static Preprocess from_json(const json& j) {
    Preprocess p;
    p.height = j.at("height");
    p.width = j.at("width");
    if (j.contains("mean")) p.mean = j.at("mean").get<std::array<double, 3>>();
    if (j.contains("std")) p.stddev = j.at("std").get<std::array<double, 3>>();
    return p;
  }
  json to_json() const {
    return {{"height", height}, {"width", width}, {"mean", mean}, {"std", stddev}};
  }

  /// Differentiable normalisation of a 3 x H x W pixel tensor.
  ad::Var apply(const ad::Var& rgb) const {
    if (rgb->shape() != Shape{3, height, width})
      throw Error("preprocess: expected image " + to_string(Shape{3, height, width}) + ", got " +
                  to_string(rgb->shape()));
    Tensor sc({3}), sh({3});
    for (std::size_t c = 0; c < 3; ++c) {
      sc[c] = 1.0 / stddev[c];
      sh[c] = -mean[c] / stddev[c];
    }
    return ad::channel_affine(rgb, ad::constant(std::move(sc)), ad::constant(std::move(sh)));
  }
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::size_t label = 0;
};

/// Image classifier: graph input "image", graph output "logits".
class Classifier {
 public:
  Classifier(std::string tag, Network net, Preprocess pre, std::size_t label_count)
      : tag_(std::move(tag)), net_(std::move(net)), pre_(pre), label_count_(label_count) {
    if (label_count_ == 0) throw Error("classifier '" + tag_ + "' has no labels");
  }

  /// Reads tag/preprocess/label count from the network description.
  static Classifier from_network(Network net) {
    const auto& d = net.description();
    return Classifier(d.value("tag", std::string("classifier")), net,
                      Preprocess::from_json(d.at("input")), d.at("label_count").get<std::size_t>());
  }

  const std::string& tag() const noexcept { return tag_; }
  const Preprocess& preprocess() const noexcept { return pre_; }
  std::size_t label_count() const noexcept { return label_count_; }
  const Network& network() const noexcept { return net_; }

  ad::Var logits(const ad::Var& rgb, const ParamBinding* binding = nullptr) const {
    auto out = net_.forward({{"image", pre_.apply(rgb)}}, {"logits"}, binding).at("logits");
    if (out->value.size() != label_count_)
      throw Error("classifier '" + tag_ + "' produced " + std::to_string(out->value.size()) +
                  " logits, expected " + std::to_string(label_count_));
    return out;
  }

  /// Resizes to the model input when needed, then evaluates.
  Prediction classify(const RgbImage& img) const {
    const RgbImage in = io::resize(img, pre_.height, pre_.width);
    auto l = logits(ad::constant(in.tensor()));
    Prediction p;
    p.logits.assign(l->value.data().begin(), l->value.data().end());
    p.probabilities = ad::softmax_values(p.logits);
    p.label = std::size_t(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
    return p;
  }

 private:
  std::string tag_;
  Network net_;
  Preprocess pre_;
  std::size_t label_count_;
};

}  // namespace semadv::models
