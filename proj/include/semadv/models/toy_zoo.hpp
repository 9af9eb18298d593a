#pragma once

// Small models that run without downloaded weights: random-weight networks for
// property tests plus hand-wired probes whose decision rule is known exactly.

#include <cmath>

#include "semadv/models/captioner.hpp"
#include "semadv/models/classifier.hpp"
#include "semadv/models/colorizer.hpp"
#include "semadv/models/feature_extractor.hpp"

namespace semadv::models::toy {

inline json conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k = 3,
                 std::size_t pad = 1, std::size_t dilation = 1) {
  return {{"name", name}, {"type", "conv2d"}, {"in", in}, {"out", out}, {"kernel", k},
          {"padding", pad}, {"dilation", dilation}};
}
inline json act(const std::string& name, const std::string& type) { return {{"name", name}, {"type", type}}; }
inline json pool(const std::string& name, const std::string& type = "avgpool") {
  return {{"name", name}, {"type", type}, {"kernel", 2}, {"stride", 2}};
}

/// conv(3->c1) act pool conv(c1->c2) act gap linear(c2->classes)
inline json classifier_desc(std::size_t size, std::size_t classes, std::size_t c1 = 8,
                            std::size_t c2 = 16, const std::string& activation = "relu") {
  json layers = json::array({{{"name", "image"}, {"type", "input"}},
                             conv("conv1", 3, c1), act("act1", activation), pool("pool1", "maxpool"),
                             conv("conv2", c1, c2), act("act2", activation),
                             {{"name", "gap"}, {"type", "gap"}},
                             {{"name", "logits"}, {"type", "linear"}, {"in", c2}, {"out", classes}}});
  return {{"kind", "classifier"}, {"label_count", classes},
          {"input", Preprocess{size, size, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}}.to_json()},
          {"layers", layers}};
}

inline Classifier make_classifier(std::uint64_t seed, std::size_t size = 16, std::size_t classes = 2,
                                  const std::string& activation = "relu") {
  json d = classifier_desc(size, classes, 8, 16, activation);
  d["tag"] = "toy-classifier";
  Network net(d);
  net.init_random(seed);
  return Classifier::from_network(std::move(net));
}

/// Five stages with taps R11..R51 and 2x average pooling between them.
inline json extractor_desc(std::size_t size, const std::array<std::size_t, 5>& ch = {4, 6, 8, 8, 8},
                           const std::string& activation = "relu") {
  json layers = json::array({{{"name", "image"}, {"type", "input"}}});
  std::size_t in = 3;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::string id = std::to_string(s + 1);
    if (s > 0) layers.push_back(pool("pool" + id));
    layers.push_back(conv("conv" + id + "_1", in, ch[s]));
    layers.push_back(act("R" + id + "1", activation));
    in = ch[s];
  }
  return {{"kind", "extractor"},
          {"input", Preprocess{size, size, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}}.to_json()},
          {"taps", {{"R11", "R11"}, {"R21", "R21"}, {"R31", "R31"}, {"R41", "R41"}, {"R51", "R51"}}},
          {"layers", layers}};
}

inline FeatureExtractor make_extractor(std::uint64_t seed, std::size_t size = 16,
                                       const std::string& activation = "relu") {
  json d = extractor_desc(size, {4, 6, 8, 8, 8}, activation);
  d["tag"] = "toy-extractor";
  Network net(d);
  net.init_random(seed);
  return FeatureExtractor::from_network(std::move(net));
}

/// Regular grid of AB bin centres with the given spacing covering [-lim, lim].
inline std::vector<std::array<double, 2>> ab_grid(double spacing = 30.0, double lim = 105.0) {
  std::vector<std::array<double, 2>> bins;
  for (double a = -lim; a <= lim + 1e-9; a += spacing)
    for (double b = -lim; b <= lim + 1e-9; b += spacing) bins.push_back({a, b});
  return bins;
}

/// Colorizer: a dilated conv trunk predicts a prior AB field and a bin
/// distribution; hints override the prior where the mask is on:
///   ab = mask * hint + (1 - mask) * prior.
inline json colorizer_desc(std::size_t bins, std::size_t width = 16) {
  json layers = json::array({
      {{"name", "L"}, {"type", "input"}},
      {{"name", "hint_ab"}, {"type", "input"}},
      {{"name", "mask"}, {"type", "input"}},
      {{"name", "L_n"}, {"type", "scalar_affine"}, {"inputs", {"L"}}, {"scale", 0.02}, {"shift", -1.0}},
      {{"name", "hint_n"}, {"type", "scalar_affine"}, {"inputs", {"hint_ab"}}, {"scale", 1.0 / 110.0}},
      {{"name", "masked_hint"}, {"type", "mul_bcast"}, {"inputs", {"hint_n", "mask"}}},
      {{"name", "x"}, {"type", "concat"}, {"inputs", {"L_n", "masked_hint", "mask"}}},
      conv("conv1", 4, width), act("act1", "relu"),
      conv("conv2", width, width, 3, 2, 2), act("act2", "relu"),
      conv("conv3", width, width, 3, 4, 4), act("act3", "relu"),
      {{"name", "prior_raw"}, {"type", "conv2d"}, {"inputs", {"act3"}}, {"in", width}, {"out", 2},
       {"kernel", 3}, {"padding", 1}},
      {{"name", "prior_n"}, {"type", "tanh"}, {"inputs", {"prior_raw"}}},
      {{"name", "prior"}, {"type", "scalar_affine"}, {"inputs", {"prior_n"}}, {"scale", 110.0}},
      {{"name", "hinted"}, {"type", "mul_bcast"}, {"inputs", {"hint_ab", "mask"}}},
      {{"name", "prior_hinted"}, {"type", "mul_bcast"}, {"inputs", {"prior", "mask"}}},
      {{"name", "prior_free"}, {"type", "sub"}, {"inputs", {"prior", "prior_hinted"}}},
      {{"name", "ab"}, {"type", "add"}, {"inputs", {"hinted", "prior_free"}}},
      {{"name", "dist_logits"}, {"type", "conv2d"}, {"inputs", {"act3"}}, {"in", width}, {"out", bins},
       {"kernel", 1}, {"padding", 0}},
  });
  return {{"kind", "colorizer"}, {"layers", layers}};
}

inline Colorizer make_colorizer(std::uint64_t seed, double bin_spacing = 30.0) {
  const auto bins = ab_grid(bin_spacing);
  json d = colorizer_desc(bins.size(), 8);
  d["tag"] = "toy-colorizer";
  d["bins"] = bins;
  Network net(d);
  net.init_random(seed, 0.5);
  return Colorizer::from_network(std::move(net));
}

/// Two-class probe on the mean opponent-colour signal: a 1x1 convolution
/// computes (R - G) and (R + G)/2 - B, which are zero on grey pixels, then the
/// logits are +-(w_rg * mean(R-G) + w_yb * mean(Y-B)). Class 1 wins when the
/// image is on average redder/yellower than the boundary `offset`.
inline Classifier make_chroma_probe(std::size_t size, double w_rg = 8.0, double w_yb = 8.0,
                                    double offset = 0.0) {
  json layers = json::array(
      {{{"name", "image"}, {"type", "input"}},
       {{"name", "opp"}, {"type", "conv2d"}, {"in", 3}, {"out", 2}, {"kernel", 1}, {"padding", 0}},
       {{"name", "gap"}, {"type", "gap"}},
       {{"name", "logits"}, {"type", "linear"}, {"in", 2}, {"out", 2}}});
  json d{{"kind", "classifier"}, {"tag", "toy-chroma"}, {"label_count", 2},
         {"input", Preprocess{size, size}.to_json()}, {"layers", layers}};
  Network net(d);
  net.set_params({Tensor({2, 3, 1, 1}, {1.0, -1.0, 0.0, 0.5, 0.5, -1.0}), Tensor({2}, {0.0, 0.0}),
                  Tensor({2, 2}, {-w_rg, -w_yb, w_rg, w_yb}), Tensor({2}, {offset, -offset})});
  return Classifier::from_network(std::move(net));
}

/// Two-class probe on high-frequency energy: a Laplacian filter split into
/// positive and negative parts measures mean |laplacian|; class 1 wins when it
/// exceeds `threshold`.
inline Classifier make_hf_probe(std::size_t size, double threshold, double gain = 20.0) {
  json layers = json::array(
      {{{"name", "image"}, {"type", "input"}},
       {{"name", "lap"}, {"type", "conv2d"}, {"in", 3}, {"out", 2}, {"kernel", 3}, {"padding", 1}},
       {{"name", "rect"}, {"type", "relu"}},
       {{"name", "gap"}, {"type", "gap"}},
       {{"name", "logits"}, {"type", "linear"}, {"in", 2}, {"out", 2}}});
  json d{{"kind", "classifier"}, {"tag", "toy-hf"}, {"label_count", 2},
         {"input", Preprocess{size, size}.to_json()}, {"layers", layers}};
  Network net(d);
  const double lap[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  Tensor w({2, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 9; ++i) {
      w[(0 * 3 + c) * 9 + i] = lap[i] / 3.0;
      w[(1 * 3 + c) * 9 + i] = -lap[i] / 3.0;
    }
  net.set_params({w, Tensor({2}), Tensor({2, 2}, {-gain, -gain, gain, gain}),
                  Tensor({2}, {gain * threshold, -gain * threshold})});
  return Classifier::from_network(std::move(net));
}

/// Random-weight convolutional attention captioner.
inline Captioner make_captioner(std::uint64_t seed, std::size_t size, std::vector<std::string> words,
                                std::size_t max_len = 4, std::size_t channels = 6, std::size_t embed = 5) {
  json layers = json::array({{{"name", "image"}, {"type", "input"}},
                             conv("conv1", 3, channels), act("act1", "tanh"), pool("pool1"),
                             conv("features", channels, channels)});
  Network enc(json{{"layers", layers}});
  enc.init_random(seed);
  std::vector<std::string> vocab{"<start>", "<end>"};
  vocab.insert(vocab.end(), words.begin(), words.end());
  const std::size_t V = vocab.size();
  Captioner::Decoder dec{Tensor({V, embed}), Tensor({max_len, embed}), Tensor({channels, embed}),
                         Tensor({V, channels}), Tensor({V, embed}), Tensor({V})};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (auto* t : dec.all())
    for (double& v : t->data()) v = nd(rng);
  return Captioner("toy-captioner", std::move(enc), Preprocess{size, size, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}},
                   std::move(vocab), max_len, std::move(dec));
}

/// Hand-wired captioner over {"sign", "red", "green"} with logits linear in the
/// mean opponent colour rg = mean(R - G). Caption: "sign" then a word chosen by
/// rg at position 1 and again at position 2, where position 2 is shifted by
/// -threshold when position 1 reads "red"; then <end>. With rg > threshold the
/// caption is "sign red red"; 0 < rg < threshold gives "sign red green".
inline Captioner make_linear_captioner(std::size_t size, double threshold, double gain = 20.0) {
  json layers = json::array(
      {{{"name", "image"}, {"type", "input"}},
       {{"name", "opp"}, {"type", "conv2d"}, {"in", 3}, {"out", 2}, {"kernel", 1}, {"padding", 0}},
       {{"name", "features"}, {"type", "avgpool"}, {"kernel", size}, {"stride", size}}});
  Network enc(json{{"layers", layers}});
  enc.set_params({Tensor({2, 3, 1, 1}, {1.0, -1.0, 0.0, 0.5, 0.5, -1.0}), Tensor({2})});
  const std::vector<std::string> vocab{"<start>", "<end>", "sign", "red", "green"};
  constexpr std::size_t V = 5, T = 4, E = 5, C = 2, kSign = 2, kRed = 3, kGreen = 4;
  Captioner::Decoder dec{Tensor({V, E}), Tensor({T, E}), Tensor({C, E}), Tensor({V, C}), Tensor({V, E}),
                         Tensor({V})};
  for (std::size_t t = 0; t < T; ++t) dec.pos_emb[t * E + t] = 1.0;
  dec.word_emb[kRed * E + 4] = 1.0;  // "previous word was red"
  const double big = 100.0;
  auto emb = [&](std::size_t v, std::size_t d) -> double& { return dec.out_emb[v * E + d]; };
  for (std::size_t t = 0; t < T; ++t) {
    emb(kSign, t) = t == 0 ? big : -big;
    emb(Captioner::kEnd, t) = t == 3 ? big : -big;
    emb(kRed, t) = emb(kGreen, t) = (t == 1 || t == 2) ? 0.0 : -big;
  }
  emb(kRed, 4) = -gain * threshold;
  emb(kGreen, 4) = gain * threshold;
  dec.out_ctx[kRed * C + 0] = gain;
  dec.out_ctx[kGreen * C + 0] = -gain;
  return Captioner("toy-linear-captioner", std::move(enc), Preprocess{size, size}, vocab, T, std::move(dec));
}

}  // namespace semadv::models::toy
