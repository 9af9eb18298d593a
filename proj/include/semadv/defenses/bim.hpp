#pragma once

// Targeted basic iterative method (iterative FGSM), the L-infinity baseline
// that the semantic attacks are compared against under defenses.

#include <algorithm>
#include <cmath>

#include "semadv/attack_result.hpp"
#include "semadv/models/classifier.hpp"

namespace semadv::defenses {

struct BimConfig {
  double epsilon = 8.0 / 255.0;
  double step = 1.0 / 255.0;
  int iters = 10;

  void validate() const {
    if (!(epsilon > 0.0) || !(step > 0.0) || iters < 1)
      throw Error("bim: epsilon, step and iters must be positive");
  }
};

/// x <- clip_{x0, eps}(x - step * sign(grad CE(F(x), target))), kept in [0,1].
inline AttackResult bim_attack(const models::Classifier& clf, const RgbImage& img, std::size_t target,
                               const BimConfig& cfg = {}) {
  cfg.validate();
  if (target >= clf.label_count()) throw Error("bim: target outside the label range");
  const Tensor& x0 = img.tensor();
  Tensor x = x0;
  AttackResult res;
  res.original = img;
  res.target = target;
  for (int it = 0; it < cfg.iters; ++it) {
    auto v = ad::leaf(x);
    auto logits = clf.logits(v);
    auto loss = ad::cross_entropy(logits, target);
    const auto p = ad::softmax_values(logits->value.data());
    res.trace.push_back({it, ad::scalar(loss), p[target],
                         std::size_t(std::max_element(p.begin(), p.end()) - p.begin())});
    ad::backward(loss);
    const auto& g = v->grad_buffer();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      x[i] = std::clamp(x[i] - cfg.step * s, std::max(0.0, x0[i] - cfg.epsilon), std::min(1.0, x0[i] + cfg.epsilon));
    }
  }
  res.adversarial = RgbImage(x);
  const auto pred = clf.classify(res.adversarial);
  res.predicted = pred.label;
  res.confidence = pred.probabilities[target];
  res.success = pred.label == target;
  res.iterations = cfg.iters;
  res.stop_reason = "max_iters";
  res.norms = lp_metrics(res.original, res.adversarial);
  return res;
}

}  // namespace semadv::defenses
