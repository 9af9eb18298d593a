#pragma once

// Targeted caption attacks. Selected caption positions are driven to target
// words through either the colorization mechanism (Adam on dense hints and
// mask, starting from full ground-truth hints) or the texture mechanism
// (L-BFGS on pixels under texture loss plus caption loss).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "semadv/attack_result.hpp"
#include "semadv/cadv/attack.hpp"
#include "semadv/core/optim.hpp"
#include "semadv/imaging/lab_op.hpp"
#include "semadv/models/captioner.hpp"
#include "semadv/models/colorizer.hpp"
#include "semadv/tadv/source.hpp"
#include "semadv/tadv/texture.hpp"

namespace semadv::captioning {

enum class TargetMode { WordSubstitution, FullCaption };
enum class Mechanism { Cadv, Tadv };

inline Mechanism parse_mechanism(const std::string& s) {
  if (s == "cadv") return Mechanism::Cadv;
  if (s == "tadv") return Mechanism::Tadv;
  throw Error("unknown caption attack mechanism '" + s + "' (expected cadv or tadv)");
}

inline std::string to_string(Mechanism m) { return m == Mechanism::Cadv ? "cadv" : "tadv"; }

struct CaptionTarget {
  std::vector<std::size_t> positions;  // word indices, strictly increasing
  std::vector<std::size_t> words;      // vocabulary ids, one per position
  TargetMode mode = TargetMode::WordSubstitution;

  /// (position, word id) pairs.
  static CaptionTarget substitution(std::vector<std::pair<std::size_t, std::size_t>> pairs) {
    CaptionTarget t;
    for (const auto& [p, w] : pairs) {
      t.positions.push_back(p);
      t.words.push_back(w);
    }
    return t;
  }

  static CaptionTarget full(const std::vector<std::size_t>& caption) {
    CaptionTarget t;
    t.mode = TargetMode::FullCaption;
    for (std::size_t i = 0; i < caption.size(); ++i) t.positions.push_back(i);
    t.words = caption;
    return t;
  }

  /// "2:green,3:cat" (word substitution) or a plain caption string (full caption).
  static CaptionTarget parse(const std::string& spec, const models::Captioner& cap) {
    if (spec.find(':') == std::string::npos) return full(cap.tokenize(spec));
    CaptionTarget t;
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto end = std::min(spec.find(',', start), spec.size());
      const std::string item = spec.substr(start, end - start);
      const auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
        throw Error("caption target '" + spec + "': expected position:word pairs");
      std::size_t used = 0;
      long long pos = -1;
      try {
        pos = std::stoll(item.substr(0, colon), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != colon || pos < 0) throw Error("caption target '" + spec + "': bad position in '" + item + "'");
      t.positions.push_back(std::size_t(pos));
      t.words.push_back(cap.word_id(item.substr(colon + 1)));
      start = end + 1;
    }
    return t;
  }

  void validate(std::size_t vocab_size) const {
    if (positions.empty()) throw Error("caption target has no positions");
    if (positions.size() != words.size()) throw Error("caption target: positions and words differ in length");
    for (std::size_t i = 1; i < positions.size(); ++i)
      if (positions[i] <= positions[i - 1]) throw Error("caption target: positions must be strictly increasing");
    for (auto w : words)
      if (w >= vocab_size || w == models::Captioner::kStart)
        throw Error("caption target: word id " + std::to_string(w) + " outside the vocabulary");
  }
};

/// Sum over targeted positions of the cross-entropy toward the target word.
inline ad::Var caption_loss(const std::vector<ad::Var>& logits, const CaptionTarget& target) {
  if (target.positions.size() != target.words.size())
    throw Error("caption_loss: positions and words differ in length");
  std::vector<ad::Var> terms;
  for (std::size_t k = 0; k < target.positions.size(); ++k) {
    const auto p = target.positions[k];
    if (p >= logits.size())
      throw Error("caption_loss: position " + std::to_string(p) + " beyond caption length " +
                  std::to_string(logits.size()));
    terms.push_back(ad::cross_entropy(logits[p], target.words[k]));
  }
  if (terms.empty()) return ad::constant(Tensor({1}, {0.0}));
  return ad::add_n(terms);
}

struct CaptionAttackConfig {
  Mechanism mechanism = Mechanism::Cadv;
  int max_iters = 1000;
  double anchor_weight = 1.0;  // cross-entropy on untargeted positions toward the original words
  double lr = 1e-4;            // Adam step on hints (AB / 110) and mask
  tadv::TadvConfig texture;    // alpha, beta, steps_per_iter and layer pairs for the texture mechanism

  void validate() const {
    if (max_iters < 1) throw Error("caption attack: max_iters must be positive");
    if (!(anchor_weight >= 0.0)) throw Error("caption attack: anchor_weight must be non-negative");
    if (!(lr > 0.0)) throw Error("caption attack: lr must be positive");
    if (!(texture.alpha > 0.0) || !(texture.beta > 0.0) || texture.steps_per_iter < 1 ||
        texture.layer_pairs.empty())
      throw Error("caption attack: texture alpha, beta, steps_per_iter and layer pairs must be set");
  }
};

struct CaptionIteration {
  int iteration = 0;
  double loss = 0.0;
  std::vector<std::size_t> caption;
};

struct CaptionAttackResult {
  RgbImage original;
  RgbImage adversarial;
  std::vector<std::size_t> original_caption;
  std::vector<std::size_t> caption;   // produced caption of the adversarial image
  CaptionTarget target;
  std::vector<bool> matches;          // one flag per targeted position
  std::vector<Tensor> attention;      // attention map of each targeted position
  std::vector<Tensor> original_attention;
  bool success = false;
  NormReport norms;
  std::vector<CaptionIteration> trace;
  int iterations = 0;
  std::string stop_reason;
  double seconds = 0.0;
};

namespace detail {

/// Word sequence the decoder is teacher-forced with and the per-position
/// objective: target words at targeted positions, original words (and the
/// original <end>) elsewhere in word-substitution mode.
struct Plan {
  std::vector<std::size_t> desired;  // words fed to the decoder (includes a trailing <end> when it fits)
  CaptionTarget targeted;
  CaptionTarget anchored;
};

inline Plan make_plan(const models::Captioner& cap, const std::vector<std::size_t>& original,
                      const CaptionTarget& target) {
  Plan plan;
  plan.targeted = target;
  if (target.mode == TargetMode::FullCaption) {
    plan.desired = target.words;
    if (plan.desired.size() > cap.max_length())
      throw Error("caption target longer than the captioner's maximum length");
    if (plan.desired.size() < cap.max_length()) {
      plan.targeted.positions.push_back(plan.desired.size());
      plan.targeted.words.push_back(models::Captioner::kEnd);
      plan.desired.push_back(models::Captioner::kEnd);
    }
    return plan;
  }
  for (auto p : target.positions)
    if (p >= original.size())
      throw Error("caption target: position " + std::to_string(p) + " beyond the produced caption length " +
                  std::to_string(original.size()));
  plan.desired = original;
  for (std::size_t k = 0; k < target.positions.size(); ++k) plan.desired[target.positions[k]] = target.words[k];
  if (plan.desired.size() < cap.max_length()) plan.desired.push_back(models::Captioner::kEnd);
  for (std::size_t p = 0; p < plan.desired.size(); ++p)
    if (std::find(target.positions.begin(), target.positions.end(), p) == target.positions.end()) {
      plan.anchored.positions.push_back(p);
      plan.anchored.words.push_back(plan.desired[p]);
    }
  return plan;
}

inline ad::Var plan_loss(const models::Captioner& cap, const ad::Var& rgb, const Plan& plan, double anchor_weight) {
  const auto dec = cap.decode(rgb, plan.desired);
  auto loss = caption_loss(dec.logits, plan.targeted);
  if (!plan.anchored.positions.empty() && anchor_weight > 0.0)
    loss = ad::add(loss, ad::scale(caption_loss(dec.logits, plan.anchored), anchor_weight));
  if (!std::isfinite(ad::scalar(loss))) throw Error("caption attack: non-finite caption loss");
  return loss;
}

inline bool targets_match(const std::vector<std::size_t>& caption, const CaptionTarget& target) {
  if (target.mode == TargetMode::FullCaption) return caption == target.words;
  for (std::size_t k = 0; k < target.positions.size(); ++k)
    if (target.positions[k] >= caption.size() || caption[target.positions[k]] != target.words[k]) return false;
  return true;
}

/// Targeted positions match and, for word substitution, every other position
/// keeps its original word.
inline bool success_predicate(const std::vector<std::size_t>& caption, const std::vector<std::size_t>& original,
                              const CaptionTarget& target) {
  if (target.mode == TargetMode::FullCaption) return caption == target.words;
  if (caption.size() != original.size() || !targets_match(caption, target)) return false;
  for (std::size_t p = 0; p < caption.size(); ++p)
    if (std::find(target.positions.begin(), target.positions.end(), p) == target.positions.end() &&
        caption[p] != original[p])
      return false;
  return true;
}

inline std::vector<Tensor> attention_at(const models::Captioner& cap, const RgbImage& img,
                                        const std::vector<std::size_t>& caption, const CaptionTarget& target) {
  std::vector<Tensor> maps;
  std::vector<std::size_t> words = caption;
  const std::size_t need = target.positions.empty() ? 0 : target.positions.back() + 1;
  if (need > cap.max_length()) return maps;
  while (words.size() < need) words.push_back(models::Captioner::kEnd);
  words.resize(need);
  if (words.empty()) return maps;
  const auto dec = cap.decode(ad::constant(img.tensor()), words);
  for (auto p : target.positions) maps.push_back(dec.attention[p]);
  return maps;
}

inline void finish(CaptionAttackResult& res, const models::Captioner& cap,
                   std::chrono::steady_clock::time_point t0) {
  res.caption = cap.caption(res.adversarial);
  for (std::size_t k = 0; k < res.target.positions.size(); ++k) {
    const auto p = res.target.positions[k];
    res.matches.push_back(p < res.caption.size() && res.caption[p] == res.target.words[k]);
  }
  res.success = success_predicate(res.caption, res.original_caption, res.target);
  res.attention = attention_at(cap, res.adversarial, res.caption, res.target);
  res.original_attention = attention_at(cap, res.original, res.original_caption, res.target);
  res.norms = lp_metrics(res.original, res.adversarial);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_inputs(const models::Captioner& cap, const RgbImage& img, const CaptionTarget& target,
                         const CaptionAttackConfig& cfg) {
  cfg.validate();
  target.validate(cap.vocab_size());
  if (img.height() != cap.preprocess().height || img.width() != cap.preprocess().width)
    throw Error("caption attack: image is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                " but captioner '" + cap.tag() + "' expects " + std::to_string(cap.preprocess().height) + "x" +
                std::to_string(cap.preprocess().width));
}

}  // namespace detail

/// Colorization mechanism: all ground-truth colour hints are given, then the
/// dense hints and mask are optimised with Adam.
inline CaptionAttackResult attack_caption_cadv(const models::Captioner& cap, const models::Colorizer& col,
                                               const RgbImage& image, const CaptionTarget& target,
                                               const CaptionAttackConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::check_inputs(cap, image, target, cfg);
  CaptionAttackResult res;
  res.original = image;
  res.target = target;
  res.original_caption = cap.caption(image);
  const auto plan = detail::make_plan(cap, res.original_caption, target);
  if (detail::success_predicate(res.original_caption, res.original_caption, target)) {
    res.adversarial = image;
    res.stop_reason = "already_satisfied";
    detail::finish(res, cap, t0);
    return res;
  }

  const auto lab = rgb_to_lab(image);
  Tensor h = lab.ab;
  for (double& v : h.data()) v /= cadv::kAbScale;
  auto hint = ad::leaf(std::move(h));
  auto mask = ad::leaf(Tensor(lab.L.shape(), std::vector<double>(lab.L.size(), 1.0)));
  const auto L = ad::constant(lab.L);
  optim::Adam adam({.lr = cfg.lr});
  std::vector<std::size_t> prev;
  res.stop_reason = "max_iters";
  for (int it = 0;; ++it) {
    auto ab = col.forward_ab(L, ad::scale(hint, cadv::kAbScale), mask);
    auto rgb = ad::lab_to_rgb(ad::concat_channels({L, ab}));
    res.adversarial = RgbImage(rgb->value);
    const auto now = cap.caption(res.adversarial);
    auto loss = detail::plan_loss(cap, rgb, plan, cfg.anchor_weight);
    res.trace.push_back({it, ad::scalar(loss), now});
    res.iterations = it;
    if (it > 0 && now == prev && detail::targets_match(now, target)) {
      res.stop_reason = "target_reached";
      break;
    }
    if (it == cfg.max_iters) break;
    prev = now;
    auto grads = ad::gradients(loss, {hint, mask});
    adam.step({&hint->value, &mask->value}, grads);
    for (double& v : mask->value.data()) v = std::clamp(v, 0.0, 1.0);
    for (double& v : hint->value.data()) v = std::clamp(v, -128.0 / cadv::kAbScale, 127.0 / cadv::kAbScale);
  }
  detail::finish(res, cap, t0);
  return res;
}

/// Texture mechanism: L-BFGS on the pixels under
/// alpha * texture_loss(victim, source) + beta * caption objective, in rounds
/// of `texture.steps_per_iter` steps with clamping and a stop check after each.
inline CaptionAttackResult attack_caption_tadv(const models::Captioner& cap, const models::FeatureExtractor& ex,
                                               const RgbImage& image, const CaptionTarget& target,
                                               const RgbImage& source, const CaptionAttackConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::check_inputs(cap, image, target, cfg);
  if (source.height() != image.height() || source.width() != image.width())
    throw Error("caption attack: texture source must have the victim's size");
  CaptionAttackResult res;
  res.original = image;
  res.target = target;
  res.original_caption = cap.caption(image);
  const auto plan = detail::make_plan(cap, res.original_caption, target);
  if (detail::success_predicate(res.original_caption, res.original_caption, target)) {
    res.adversarial = image;
    res.stop_reason = "already_satisfied";
    detail::finish(res, cap, t0);
    return res;
  }

  const auto& tc = cfg.texture;
  const auto stats = tadv::texture_stats(ex, ad::constant(source.tensor()), tc.layer_pairs);
  const Shape shape = image.tensor().shape();
  std::vector<double> x(image.tensor().data().begin(), image.tensor().data().end());
  optim::Objective f = [&](std::span<const double> xs, std::span<double> g) {
    auto v = ad::leaf(Tensor(shape, std::vector<double>(xs.begin(), xs.end())));
    auto loss = ad::add(ad::scale(tadv::texture_loss(ex, v, stats, tc), tc.alpha),
                        ad::scale(detail::plan_loss(cap, v, plan, cfg.anchor_weight), tc.beta));
    const double l = ad::scalar(loss);
    if (!std::isfinite(l)) throw Error("caption attack: non-finite objective");
    ad::backward(loss);
    const auto& gv = v->grad_buffer();
    std::copy(gv.data().begin(), gv.data().end(), g.begin());
    return l;
  };

  optim::LbfgsOptions lo;
  lo.history = 10;
  std::vector<std::size_t> prev = res.original_caption;
  res.stop_reason = "max_iters";
  while (res.iterations < cfg.max_iters) {
    lo.max_steps = std::min(tc.steps_per_iter, cfg.max_iters - res.iterations);
    const auto rep = optim::lbfgs_minimize(x, f, lo);
    if (rep.stop == optim::LbfgsStop::NonFinite) throw Error("caption attack: non-finite objective during line search");
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    res.iterations += std::max(rep.steps, 1);
    res.adversarial = RgbImage(Tensor(shape, x));
    const auto now = cap.caption(res.adversarial);
    res.trace.push_back({res.iterations, rep.final_loss, now});
    if (now == prev && detail::targets_match(now, target)) {
      res.stop_reason = "target_reached";
      break;
    }
    prev = now;
  }
  if (res.adversarial.tensor().empty()) res.adversarial = image;
  detail::finish(res, cap, t0);
  return res;
}

/// Nearest neighbour of the victim in the bank by embedding cosine distance,
/// regardless of label.
inline RgbImage nearest_source(const RgbImage& victim, const tadv::TextureBank& bank,
                               const models::FeatureExtractor& ex) {
  if (bank.empty()) throw Error("caption attack: texture bank is empty");
  const auto v = ex.embed(victim);
  const auto& embs = bank.embeddings(ex);
  std::size_t best = 0;
  for (std::size_t i = 1; i < embs.size(); ++i)
    if (models::cosine_distance(v, embs[i]) < models::cosine_distance(v, embs[best])) best = i;
  return bank.entries()[best].image;
}

}  // namespace semadv::captioning
