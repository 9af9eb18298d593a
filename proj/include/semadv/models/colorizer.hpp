#pragma once

#include <string>
#include <utility>
#include <vector>

#include "semadv/imaging/image.hpp"
#include "semadv/models/network.hpp"

namespace semadv::models {

/// Colour hints for the colorizer: a dense AB field and a dense mask. Both are
/// optimisation variables during an attack, so the mask is real-valued; it is
/// binary only right after sampling.
struct HintSet {
  Tensor hint_ab;  // 2 x H x W, AB units
  Tensor mask;     // 1 x H x W
  std::vector<std::pair<std::size_t, std::size_t>> positions;  // sampled (y, x)

  static HintSet empty(std::size_t height, std::size_t width) {
    return {Tensor({2, height, width}), Tensor({1, height, width}), {}};
  }
  std::size_t height() const { return mask.dim(1); }
  std::size_t width() const { return mask.dim(2); }
};

struct Colorization {
  Tensor ab;    // 2 x H x W
  Tensor dist;  // Q x H x W, per-pixel probabilities over the colour bins
};

/// User-guided colorization network. Graph inputs "L" (1 x H x W, L units),
/// "hint_ab" (2 x H x W, AB units) and "mask" (1 x H x W); outputs "ab"
/// (AB units) and "dist_logits" (Q x H x W).
class Colorizer {
 public:
  Colorizer(std::string tag, Network net, std::vector<std::array<double, 2>> bins)
      : tag_(std::move(tag)), net_(std::move(net)), bins_(std::move(bins)) {
    if (bins_.empty()) throw Error("colorizer '" + tag_ + "' has no colour bins");
  }

  static Colorizer from_network(Network net) {
    const auto& d = net.description();
    return Colorizer(d.value("tag", std::string("colorizer")), net,
                     d.at("bins").get<std::vector<std::array<double, 2>>>());
  }

  const std::string& tag() const noexcept { return tag_; }
  const Network& network() const noexcept { return net_; }
  std::size_t bin_count() const noexcept { return bins_.size(); }
  const std::vector<std::array<double, 2>>& bins() const noexcept { return bins_; }

  ad::Var forward_ab(const ad::Var& L, const ad::Var& hint_ab, const ad::Var& mask,
                     const ParamBinding* binding = nullptr) const {
    check_dims(L->value, hint_ab->value, mask->value);
    return net_.forward({{"L", L}, {"hint_ab", hint_ab}, {"mask", mask}}, {"ab"}, binding).at("ab");
  }

  Colorization colorize(const Tensor& L, const HintSet& hints,
                        const ParamBinding* binding = nullptr) const {
    check_dims(L, hints.hint_ab, hints.mask);
    for (double v : L.data())
      if (!(v >= 0.0 && v <= 100.0)) throw Error("colorize: L value outside [0,100]");
    auto out = net_.forward({{"L", ad::constant(L)}, {"hint_ab", ad::constant(hints.hint_ab)},
                             {"mask", ad::constant(hints.mask)}},
                            {"ab", "dist_logits"}, binding);
    auto dist = ad::softmax_channels(out.at("dist_logits"));
    if (dist->shape()[0] != bins_.size())
      throw Error("colorizer '" + tag_ + "' produced " + std::to_string(dist->shape()[0]) +
                  " bins, expected " + std::to_string(bins_.size()));
    return {out.at("ab")->value, dist->value};
  }

 private:
  static void check_dims(const Tensor& L, const Tensor& ab, const Tensor& mask) {
    if (L.rank() != 3 || L.dim(0) != 1 || ab.rank() != 3 || ab.dim(0) != 2 || mask.rank() != 3 ||
        mask.dim(0) != 1 || L.dim(1) != ab.dim(1) || L.dim(2) != ab.dim(2) ||
        L.dim(1) != mask.dim(1) || L.dim(2) != mask.dim(2))
      throw Error("colorizer: dimension mismatch between L " + to_string(L.shape()) + ", hints " +
                  to_string(ab.shape()) + " and mask " + to_string(mask.shape()));
  }

  std::string tag_;
  Network net_;
  std::vector<std::array<double, 2>> bins_;
};

}  // namespace semadv::models
