#pragma once

// Colorization attack. The victim sees lab_to_rgb(L, C(L, hints, mask; theta));
// either the dense hint/mask fields or a per-image copy of theta are updated
// with Adam on the targeted cross-entropy until the target class is predicted
// and its probability has settled.

#include <cmath>
#include <functional>

#include "semadv/attack_result.hpp"
#include "semadv/cadv/config.hpp"
#include "semadv/cadv/hints.hpp"
#include "semadv/core/optim.hpp"
#include "semadv/imaging/lab_op.hpp"
#include "semadv/models/classifier.hpp"
#include "semadv/models/colorizer.hpp"

namespace semadv::cadv {

inline constexpr double kAbScale = 110.0;  // hints are optimised in AB / 110 units

namespace detail {

struct Evaluation {
  ad::Var rgb;
  ad::Var loss;
  double confidence;
  std::size_t predicted;
};

inline Evaluation evaluate(const models::Classifier& clf, const ad::Var& L, const ad::Var& ab,
                           std::size_t target) {
  auto rgb = ad::lab_to_rgb(ad::concat_channels({L, ab}));
  auto logits = clf.logits(rgb);
  auto loss = ad::cross_entropy(logits, target);
  if (!std::isfinite(ad::scalar(loss)))
    throw Error("cadv: non-finite adversarial loss (logits contain NaN/Inf)");
  const auto p = ad::softmax_values(logits->value.data());
  const auto pred = std::size_t(std::max_element(p.begin(), p.end()) - p.begin());
  return {rgb, loss, p[target], pred};
}

/// Shared optimisation loop. `colorize` builds the AB field from the current
/// variables; `after_step` projects them back into their valid range.
inline AttackResult optimise(const models::Classifier& clf, const LabImage& lab, std::size_t target,
                             const CadvConfig& cfg, const std::vector<ad::Var>& vars,
                             const std::function<ad::Var()>& colorize,
                             const std::function<void()>& after_step) {
  cfg.validate();
  lab.validate();
  if (target >= clf.label_count())
    throw Error("cadv: target " + std::to_string(target) + " outside the classifier's " +
                std::to_string(clf.label_count()) + " labels");
  if (clf.preprocess().height != lab.height() || clf.preprocess().width != lab.width())
    throw Error("cadv: image is " + std::to_string(lab.height()) + "x" + std::to_string(lab.width()) +
                " but classifier '" + clf.tag() + "' expects " + std::to_string(clf.preprocess().height) +
                "x" + std::to_string(clf.preprocess().width));

  AttackResult res;
  res.original = lab_to_rgb(lab);
  res.target = target;
  const auto L = ad::constant(lab.L);
  optim::Adam adam({.lr = cfg.lr});
  double prev_conf = std::nan("");
  for (int it = 0;; ++it) {
    auto ab = colorize();
    if (ab->shape() != lab.ab.shape())
      throw Error("cadv: colorizer output " + to_string(ab->shape()) + " does not match image AB " +
                  to_string(lab.ab.shape()));
    auto ev = evaluate(clf, L, ab, target);
    res.trace.push_back({it, ad::scalar(ev.loss), ev.confidence, ev.predicted});
    const bool settled = it > 0 && std::abs(ev.confidence - prev_conf) <= cfg.conf_delta;
    if ((ev.predicted == target && settled) || it == cfg.max_iters) {
      res.adversarial = RgbImage(ev.rgb->value);
      res.predicted = ev.predicted;
      res.confidence = ev.confidence;
      res.success = ev.predicted == target;
      res.stop_reason = res.success && settled ? "target_reached" : "max_iters";
      res.iterations = it;
      break;
    }
    prev_conf = ev.confidence;
    auto grads = ad::gradients(ev.loss, vars);
    std::vector<Tensor*> params;
    for (const auto& v : vars) params.push_back(&v->value);
    adam.step(params, grads);
    after_step();
  }
  res.norms = lp_metrics(res.original, res.adversarial);
  return res;
}

}  // namespace detail

/// Jointly optimises the dense hint field and mask. Mask values are clamped to
/// [0,1] and hints to the AB range after every step.
inline AttackResult attack_hints_mask(const models::Classifier& clf, const models::Colorizer& col,
                                      const LabImage& lab, const models::HintSet& hints, std::size_t target,
                                      const CadvConfig& cfg) {
  if (hints.hint_ab.shape() != lab.ab.shape() || hints.mask.shape() != lab.L.shape())
    throw Error("attack_hints_mask: hint set " + to_string(hints.hint_ab.shape()) +
                " does not match the image " + to_string(lab.ab.shape()));
  Tensor h = hints.hint_ab;
  for (double& v : h.data()) v /= kAbScale;
  auto hint = ad::leaf(std::move(h));
  auto mask = ad::leaf(hints.mask);
  const auto L = ad::constant(lab.L);
  return detail::optimise(
      clf, lab, target, cfg, {hint, mask},
      [&] { return col.forward_ab(L, ad::scale(hint, kAbScale), mask); },
      [&] {
        for (double& v : mask->value.data()) v = std::min(1.0, std::max(0.0, v));
        for (double& v : hint->value.data()) v = std::min(127.0 / kAbScale, std::max(-128.0 / kAbScale, v));
      });
}

/// Optimises a private copy of the colorizer weights with no hints given. The
/// colorizer passed in is never modified.
inline AttackResult attack_network_weights(const models::Classifier& clf, const models::Colorizer& col,
                                           const LabImage& lab, std::size_t target, const CadvConfig& cfg) {
  const auto theta = col.network().clone_params(true);
  const auto L = ad::constant(lab.L);
  const auto zero_hints = ad::constant(Tensor(lab.ab.shape()));
  const auto zero_mask = ad::constant(Tensor(lab.L.shape()));
  return detail::optimise(
      clf, lab, target, cfg, theta, [&] { return col.forward_ab(L, zero_hints, zero_mask, &theta); }, [] {});
}

/// Entropy-guided hint initialisation: colorize without hints, take the
/// per-pixel entropy of the predicted distribution, cluster the smoothed
/// ground-truth AB values and sample hints from the k calmest clusters.
inline models::HintSet initial_hints(const models::Colorizer& col, const LabImage& lab, const CadvConfig& cfg) {
  cfg.validate();
  const auto prior = col.colorize(lab.L, models::HintSet::empty(lab.height(), lab.width()));
  const auto entropy = compute_entropy_map(prior.dist);
  return sample_hints(cluster_ab(lab, cfg), entropy, lab.ab, cfg);
}

}  // namespace semadv::cadv
