#include <gtest/gtest.h>

#include <filesystem>

#include "semadv/models/registry.hpp"
#include "test_util.hpp"

using namespace semadv;
using namespace semadv::models;

namespace {

RgbImage random_image(std::uint64_t seed, std::size_t size = 16) {
  return RgbImage(testkit::random_tensor({3, size, size}, seed, 0.0, 1.0));
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("semadv_models_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Classifier, DeterministicLogits) {
  const auto clf = toy::make_classifier(5, 16, 3);
  const auto img = random_image(1);
  const auto a = clf.classify(img), b = clf.classify(img);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.logits.size(), 3u);
  EXPECT_EQ(a.label, std::size_t(std::max_element(a.logits.begin(), a.logits.end()) - a.logits.begin()));
}

TEST(Classifier, ChromaProbeIsHandComputedAffineMap) {
  const double w_rg = 3.0, w_yb = -2.0, offset = 0.1;
  const auto clf = toy::make_chroma_probe(4, w_rg, w_yb, offset);
  RgbImage img(4, 4);
  double sum_rg = 0.0, sum_yb = 0.0;
  const auto t = testkit::random_tensor({3, 4, 4}, 2, 0.0, 1.0);
  img = RgbImage(t);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      sum_rg += r - g;
      sum_yb += 0.5 * (r + g) - b;
    }
  const double s = w_rg * sum_rg / 16.0 + w_yb * sum_yb / 16.0;
  const auto p = clf.classify(img);
  EXPECT_NEAR(p.logits[0], -s + offset, 1e-12);
  EXPECT_NEAR(p.logits[1], s - offset, 1e-12);
}

TEST(Classifier, LogitGradientMatchesDirectionalDifference) {
  const auto clf = toy::make_classifier(6, 16, 3);
  const auto x = testkit::random_tensor({3, 16, 16}, 3, 0.2, 0.8);
  const auto dir = testkit::random_tensor({3, 16, 16}, 4);
  auto v = ad::leaf(x);
  auto l = ad::row(ad::reshape(clf.logits(v), {1, 3}), 0);
  ad::backward(ad::sum(ad::slice_channels(ad::reshape(l, {3, 1, 1}), 1, 2)));
  double analytic = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) analytic += v->grad_buffer()[i] * dir[i];
  const double h = 1e-5;
  Tensor xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += h * dir[i];
    xm[i] -= h * dir[i];
  }
  const double numeric = (clf.logits(ad::constant(xp))->value[1] - clf.logits(ad::constant(xm))->value[1]) / (2 * h);
  EXPECT_LT(std::abs(numeric - analytic) / std::max(std::abs(numeric), 1e-8), 1e-2);
}

TEST(Classifier, RejectsWrongInputSize) {
  const auto clf = toy::make_classifier(5, 16, 2);
  EXPECT_THROW(clf.logits(ad::constant(Tensor({3, 8, 8}, 0.5))), Error);
  EXPECT_NO_THROW(clf.classify(random_image(1, 24)));  // classify resizes
}

TEST(Colorizer, DistributionIsNormalised) {
  const auto col = toy::make_colorizer(2);
  const auto lab = rgb_to_lab(random_image(7));
  const auto out = col.colorize(lab.L, HintSet::empty(16, 16));
  ASSERT_EQ(out.dist.dim(0), col.bin_count());
  const std::size_t P = 256;
  for (std::size_t p = 0; p < P; ++p) {
    double s = 0.0;
    for (std::size_t q = 0; q < col.bin_count(); ++q) {
      EXPECT_GE(out.dist[q * P + p], 0.0);
      s += out.dist[q * P + p];
    }
    EXPECT_NEAR(s, 1.0, 1e-4);
  }
  const auto again = col.colorize(lab.L, HintSet::empty(16, 16));
  EXPECT_EQ(out.ab, again.ab);
  EXPECT_EQ(out.dist, again.dist);
}

TEST(Colorizer, FullHintsPullTowardsGroundTruth) {
  const auto col = toy::make_colorizer(2);
  const auto lab = rgb_to_lab(random_image(8));
  HintSet full{lab.ab, Tensor({1, 16, 16}, 1.0), {}};
  auto err = [&](const Tensor& ab) {
    double s = 0.0;
    for (std::size_t i = 0; i < ab.size(); ++i) s += std::abs(ab[i] - lab.ab[i]);
    return s / double(ab.size());
  };
  const double with = err(col.colorize(lab.L, full).ab);
  const double without = err(col.colorize(lab.L, HintSet::empty(16, 16)).ab);
  EXPECT_LT(with, without);
}

TEST(Colorizer, DimensionMismatchThrows) {
  const auto col = toy::make_colorizer(2);
  EXPECT_THROW(col.colorize(Tensor({1, 16, 16}, 50.0), HintSet::empty(8, 8)), Error);
  EXPECT_THROW(col.colorize(Tensor({1, 16, 16}, 150.0), HintSet::empty(16, 16)), Error);
}

TEST(FeatureExtractor, TapsHaveDecreasingResolution) {
  const auto ex = toy::make_extractor(3);
  const auto f = ex.features(ad::constant(random_image(9).tensor()), FeatureExtractor::kTaps);
  ASSERT_EQ(f.size(), 5u);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_LT(f[i]->shape()[1], f[i - 1]->shape()[1]);
  const auto e = ex.embed(random_image(9));
  EXPECT_EQ(e.size(), f.back()->shape()[0]);
  EXPECT_EQ(cosine_distance(e, ex.embed(random_image(9))), 0.0);
}

TEST(FeatureExtractor, NearestNeighbourMatchesExhaustiveSearch) {
  const auto ex = toy::make_extractor(3);
  std::vector<std::vector<double>> embs;
  for (std::uint64_t s = 10; s < 13; ++s) embs.push_back(ex.embed(random_image(s)));
  const auto q = ex.embed(random_image(20));
  std::size_t best = 0;
  double best_d = 2.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dot += q[j] * embs[i][j];
      na += q[j] * q[j];
      nb += embs[i][j] * embs[i][j];
    }
    const double d = 1.0 - dot / std::sqrt(na * nb);
    EXPECT_NEAR(d, cosine_distance(q, embs[i]), 1e-12);
    if (d < best_d) best_d = d, best = i;
  }
  std::size_t got = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (cosine_distance(q, embs[i]) < cosine_distance(q, embs[got])) got = i;
  EXPECT_EQ(got, best);
}

TEST(Network, SaveLoadRoundTrip) {
  const auto dir = scratch("roundtrip");
  const auto clf = toy::make_classifier(11, 16, 4);
  clf.network().save(dir / "clf.json");
  const auto back = Classifier::from_network(Network::load(dir / "clf.json"));
  const auto img = random_image(12);
  const auto a = clf.classify(img), b = back.classify(img);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-4);
  EXPECT_EQ(back.label_count(), 4u);
  std::filesystem::remove_all(dir);
}

TEST(Network, CopiesDoNotShareParameters) {
  const auto net = toy::make_classifier(1, 16, 2).network();
  Network copy = net;
  auto params = copy.clone_params(false);
  std::vector<Tensor> zeros;
  for (const auto& p : params) zeros.push_back(Tensor(p->shape()));
  copy.set_params(zeros);
  EXPECT_NE(net.params()[0].var->value, copy.params()[0].var->value);
}

TEST(Registry, ResolvesToyTagsAndRejectsUnknown) {
  const ModelRegistry reg;
  EXPECT_TRUE(reg.has("toy-classifier"));
  EXPECT_EQ(reg.kind("toy-colorizer"), "colorizer");
  EXPECT_FALSE(reg.has("resnet50"));
  EXPECT_THROW(reg.classifier("resnet50"), Error);
  EXPECT_THROW(reg.classifier("toy-colorizer"), Error);
}

TEST(Registry, LoadsSavedModelsByTag) {
  const auto dir = scratch("registry");
  auto clf = toy::make_classifier(13, 16, 3);
  json d = clf.network().description();
  clf.network().save(dir / "mini.json");
  const ModelRegistry reg(dir);
  EXPECT_TRUE(reg.has("mini"));
  EXPECT_EQ(reg.classifier("mini").label_count(), 3u);
  EXPECT_THROW(reg.colorizer("mini"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Captioner, GreedyCaptionIsDeterministicAndInVocabulary) {
  const auto cap = toy::make_captioner(4, 16, {"red", "green", "blue"});
  const auto img = random_image(14);
  const auto a = cap.caption(img);
  EXPECT_EQ(a, cap.caption(img));
  EXPECT_LE(a.size(), cap.max_length());
  for (auto w : a) EXPECT_GE(w, 2u);
  EXPECT_THROW(cap.word_id("purple"), Error);
  const auto dec = cap.decode(ad::constant(img.tensor()), {2, 3});
  EXPECT_EQ(dec.logits[0]->value.size(), cap.vocab_size());
  double s = 0.0;
  for (double v : dec.attention[1].data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Captioner, SaveLoadRoundTrip) {
  const auto dir = scratch("captioner");
  const auto cap = toy::make_captioner(4, 16, {"red", "green", "blue"});
  cap.save(dir / "cap.json");
  const auto back = Captioner::load(dir / "cap.json");
  const auto img = random_image(15);
  EXPECT_EQ(back.vocabulary(), cap.vocabulary());
  const auto a = cap.decode(ad::constant(img.tensor()), {2}).logits[0]->value;
  const auto b = back.decode(ad::constant(img.tensor()), {2}).logits[0]->value;
  EXPECT_LT(max_abs_diff(a, b), 1e-4);
  std::filesystem::remove_all(dir);
}
