#pragma once

// Texture attack: L-BFGS on the victim pixels under
// alpha * texture_loss(victim, source) + beta * CE(classifier(victim), target).

#include <algorithm>
#include <cmath>

#include "semadv/attack_result.hpp"
#include "semadv/core/optim.hpp"
#include "semadv/models/classifier.hpp"
#include "semadv/tadv/texture.hpp"

namespace semadv::tadv {

/// The full objective at pixel tensor `victim`; returns the scalar loss node.
inline ad::Var texture_objective(const models::Classifier& clf, const models::FeatureExtractor& ex,
                                 const ad::Var& victim, const std::vector<GramMatrix>& source_stats,
                                 std::size_t target, const TadvConfig& cfg) {
  auto lt = ad::scale(texture_loss(ex, victim, source_stats, cfg), cfg.alpha);
  if (cfg.beta == 0.0) return lt;
  auto ce = ad::cross_entropy(clf.logits(victim), target);
  return ad::add(lt, ad::scale(ce, cfg.beta));
}

namespace detail {

inline std::pair<std::size_t, double> predict(const models::Classifier& clf, const Tensor& x, std::size_t target) {
  const auto logits = clf.logits(ad::constant(x));
  const auto p = ad::softmax_values(logits->value.data());
  return {std::size_t(std::max_element(p.begin(), p.end()) - p.begin()), p[target]};
}

}  // namespace detail

inline AttackResult attack_texture(const models::Classifier& clf, const models::FeatureExtractor& ex,
                                   const RgbImage& victim, std::size_t target, const RgbImage& source,
                                   const TadvConfig& cfg) {
  cfg.validate();
  if (target >= clf.label_count())
    throw Error("tadv: target " + std::to_string(target) + " outside the classifier's " +
                std::to_string(clf.label_count()) + " labels");
  if (victim.height() != source.height() || victim.width() != source.width())
    throw Error("tadv: texture source must have the victim's size");

  const auto stats = texture_stats(ex, ad::constant(source.tensor()), cfg.layer_pairs);
  const Shape shape = victim.tensor().shape();
  std::vector<double> x(victim.tensor().data().begin(), victim.tensor().data().end());

  optim::Objective f = [&](std::span<const double> xs, std::span<double> g) {
    auto v = ad::leaf(Tensor(shape, std::vector<double>(xs.begin(), xs.end())));
    auto loss = texture_objective(clf, ex, v, stats, target, cfg);
    const double l = ad::scalar(loss);
    if (!std::isfinite(l)) throw Error("tadv: non-finite objective (" + std::to_string(l) + ")");
    ad::backward(loss);
    const auto& gv = v->grad_buffer();
    std::copy(gv.data().begin(), gv.data().end(), g.begin());
    return l;
  };

  AttackResult res;
  res.original = victim;
  res.target = target;
  optim::LbfgsOptions lo;
  lo.max_steps = cfg.steps_per_iter;
  lo.history = 10;
  res.stop_reason = "rounds_exhausted";
  for (int round = 1; round <= cfg.iters; ++round) {
    const auto rep = optim::lbfgs_minimize(x, f, lo);
    if (rep.stop == optim::LbfgsStop::NonFinite) throw Error("tadv: non-finite objective during line search");
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    res.rounds = round;
    res.lbfgs_steps += rep.steps;
    res.round_stops.push_back(optim::to_string(rep.stop));
    const auto [pred, conf] = detail::predict(clf, Tensor(shape, x), target);
    res.trace.push_back({round, rep.final_loss, conf, pred});
    if (conf > cfg.conf_stop) {
      res.stop_reason = "confidence";
      break;
    }
  }
  res.adversarial = RgbImage(Tensor(shape, x));
  const auto [pred, conf] = detail::predict(clf, res.adversarial.tensor(), target);
  res.predicted = pred;
  res.confidence = conf;
  res.success = pred == target;
  res.iterations = res.lbfgs_steps;
  res.norms = lp_metrics(res.original, res.adversarial);
  return res;
}

}  // namespace semadv::tadv
