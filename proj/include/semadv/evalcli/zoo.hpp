#pragma once

// Desk-scale model zoo: small classifiers and a colorizer trained on the
// procedural image set, written to a weights directory in the registry
// format so they load by tag like any other model.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "semadv/core/optim.hpp"
#include "semadv/evalcli/synthetic.hpp"
#include "semadv/imaging/lab_op.hpp"
#include "semadv/models/registry.hpp"

namespace semadv::evalcli::zoo {

using models::json;

struct TrainOptions {
  int epochs = 8;
  std::size_t batch = 16;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

using Progress = std::function<void(const std::string&)>;

namespace detail {

/// Mini-batch Adam over a network's parameters; `loss` builds one sample's
/// loss under the given parameter binding.
inline void fit(models::Network& net, std::size_t samples, const TrainOptions& opt,
                const std::function<ad::Var(std::size_t, const models::ParamBinding&)>& loss,
                const Progress& progress, const std::string& label) {
  auto theta = net.clone_params(true);
  optim::Adam adam({.lr = opt.lr});
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < samples; start += opt.batch) {
      const std::size_t end = std::min(samples, start + opt.batch);
      std::vector<Tensor> acc;
      for (const auto& p : theta) acc.emplace_back(p->shape());
      for (std::size_t k = start; k < end; ++k) {
        auto l = loss(order[k], theta);
        total += ad::scalar(l);
        const auto g = ad::gradients(l, theta);
        for (std::size_t i = 0; i < acc.size(); ++i)
          for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += g[i][j] / double(end - start);
      }
      std::vector<Tensor*> params;
      for (auto& p : theta) params.push_back(&p->value);
      adam.step(params, acc);
    }
    if (progress) progress(label + " epoch " + std::to_string(epoch + 1) + " mean loss " +
                           std::to_string(total / double(samples)));
  }
  std::vector<Tensor> values;
  for (const auto& p : theta) values.push_back(p->value);
  net.set_params(values);
}

}  // namespace detail

struct ClassifierSpec {
  std::string tag;
  std::size_t c1, c2;
  std::string activation;
  std::uint64_t seed;
};

/// The three desk-scale victims differ in width, activation and seed so that
/// transfer between them is non-trivial.
inline std::vector<ClassifierSpec> classifier_specs() {
  return {{"desk-a", 16, 32, "relu", 11}, {"desk-b", 12, 24, "tanh", 12}, {"desk-c", 8, 16, "relu", 13}};
}

inline models::Classifier train_classifier(const ClassifierSpec& spec, const std::vector<LabelledImage>& data,
                                           std::size_t size, TrainOptions opt, const Progress& progress = {}) {
  auto d = models::toy::classifier_desc(size, synthetic::kClasses, spec.c1, spec.c2, spec.activation);
  d["tag"] = spec.tag;
  models::Network net(d);
  net.init_random(spec.seed);
  const auto pre = models::Preprocess::from_json(d.at("input"));
  opt.seed = spec.seed;
  detail::fit(net, data.size(), opt, [&](std::size_t i, const models::ParamBinding& th) {
    auto logits = net.forward({{"image", pre.apply(ad::constant(data[i].image.tensor()))}}, {"logits"}, &th).at("logits");
    return ad::cross_entropy(logits, data[i].label);
  }, progress, spec.tag);
  return models::Classifier::from_network(std::move(net));
}

/// Trains the toy colorizer architecture to reproduce AB from L plus a random
/// number (0..max_hints) of ground-truth hints, with a squared-error term on
/// AB and a Brier term on the colour-bin distribution.
inline models::Colorizer train_colorizer(const std::vector<LabelledImage>& data, TrainOptions opt,
                                         std::size_t max_hints = 60, std::size_t width = 16,
                                         double ab_weight = 10.0, const Progress& progress = {}) {
  const auto bins = models::toy::ab_grid(30.0);
  json d = models::toy::colorizer_desc(bins.size(), width);
  d["tag"] = "desk-colorizer";
  d["bins"] = bins;
  models::Network net(d);
  net.init_random(opt.seed + 21, 0.5);
  std::vector<LabImage> labs;
  for (const auto& e : data) labs.push_back(rgb_to_lab(e.image));
  std::mt19937_64 rng(opt.seed + 22);
  detail::fit(net, data.size(), opt, [&](std::size_t i, const models::ParamBinding& th) {
    const auto& lab = labs[i];
    const std::size_t H = lab.height(), W = lab.width();
    models::HintSet hs = models::HintSet::empty(H, W);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, max_hints)(rng);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t y = rng() % H, x = rng() % W;
      hs.mask[y * W + x] = 1.0;
      for (std::size_t c = 0; c < 2; ++c) hs.hint_ab[c * H * W + y * W + x] = lab.ab[c * H * W + y * W + x];
    }
    auto out = net.forward({{"L", ad::constant(lab.L)}, {"hint_ab", ad::constant(hs.hint_ab)},
                            {"mask", ad::constant(hs.mask)}},
                           {"prior", "dist_logits"}, &th);
    Tensor onehot({bins.size(), H, W});
    for (std::size_t p = 0; p < H * W; ++p) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t b = 0; b < bins.size(); ++b) {
        const double da = lab.ab[p] - bins[b][0], db = lab.ab[H * W + p] - bins[b][1];
        if (da * da + db * db < bd) {
          bd = da * da + db * db;
          best = b;
        }
      }
      onehot[best * H * W + p] = 1.0;
    }
    auto ab_err = ad::scale(ad::sum_squares(ad::sub(out.at("prior"), ad::constant(lab.ab))),
                            ab_weight / (110.0 * 110.0 * double(H * W)));
    auto dist_err = ad::scale(ad::sum_squares(ad::sub(ad::softmax_channels(out.at("dist_logits")), ad::constant(onehot))),
                              1.0 / double(H * W));
    return ad::add(ab_err, dist_err);
  }, progress, "desk-colorizer");
  return models::Colorizer::from_network(std::move(net));
}

inline models::FeatureExtractor make_extractor(std::size_t size) {
  auto d = models::toy::extractor_desc(size, {8, 12, 16, 16, 16});
  d["tag"] = "desk-extractor";
  models::Network net(d);
  net.init_random(31);
  return models::FeatureExtractor::from_network(std::move(net));
}

struct ZooOptions {
  std::size_t size = 32;
  std::size_t train_per_class = 40;
  std::uint64_t seed = 1;  // training images are drawn with a seed distinct from evaluation sets
  TrainOptions classifier{.epochs = 8, .batch = 16, .lr = 3e-3, .seed = 0};
  TrainOptions colorizer{.epochs = 20, .batch = 8, .lr = 3e-3, .seed = 0};
};

inline std::vector<std::string> zoo_tags() {
  std::vector<std::string> tags;
  for (const auto& s : classifier_specs()) tags.push_back(s.tag);
  tags.push_back("desk-colorizer");
  tags.push_back("desk-extractor");
  return tags;
}

/// Builds every missing zoo model under `dir`; returns the test accuracy of
/// each classifier on a held-out set (empty entries for cached models).
inline std::map<std::string, double> ensure_zoo(const std::filesystem::path& dir, const ZooOptions& opt = {},
                                                const Progress& progress = {}) {
  std::filesystem::create_directories(dir);
  std::vector<LabelledImage> train;
  auto training_set = [&]() -> const std::vector<LabelledImage>& {
    if (train.empty()) train = synthetic::make_images(opt.train_per_class, opt.size, opt.seed * 104729ULL + 17);
    return train;
  };
  std::map<std::string, double> accuracy;
  const auto held_out = synthetic::make_images(10, opt.size, opt.seed * 104729ULL + 18);
  for (const auto& spec : classifier_specs()) {
    const auto path = dir / (spec.tag + ".json");
    if (!std::filesystem::exists(path)) {
      const auto clf = train_classifier(spec, training_set(), opt.size, opt.classifier, progress);
      clf.network().save(path);
    }
    const auto clf = models::Classifier::from_network(models::Network::load(path));
    std::size_t correct = 0;
    for (const auto& e : held_out) correct += clf.classify(e.image).label == e.label ? 1 : 0;
    accuracy[spec.tag] = double(correct) / double(held_out.size());
  }
  if (!std::filesystem::exists(dir / "desk-colorizer.json")) {
    auto o = opt.colorizer;
    o.seed = opt.seed;
    train_colorizer(training_set(), o, 60, 16, 10.0, progress).network().save(dir / "desk-colorizer.json");
  }
  if (!std::filesystem::exists(dir / "desk-extractor.json")) make_extractor(opt.size).network().save(dir / "desk-extractor.json");
  return accuracy;
}

}  // namespace semadv::evalcli::zoo
