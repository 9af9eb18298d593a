#include <gtest/gtest.h>

#include "semadv/defenses/bim.hpp"
#include "semadv/defenses/evaluate.hpp"
#include "semadv/models/toy_zoo.hpp"
#include "test_util.hpp"

using namespace semadv;
using namespace semadv::defenses;

namespace {

RgbImage random_image(std::uint64_t seed, std::size_t h = 16, std::size_t w = 16) {
  return RgbImage(testkit::random_tensor({3, h, w}, seed, 0.0, 1.0));
}

RgbImage from_rows(const std::vector<std::vector<double>>& rows) {
  RgbImage img(rows.size(), rows[0].size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[0].size(); ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = rows[y][x];
  return img;
}

std::pair<double, double> value_range(const RgbImage& img) {
  const auto d = img.tensor().data();
  return {*std::min_element(d.begin(), d.end()), *std::max_element(d.begin(), d.end())};
}

}  // namespace

TEST(Jpeg, DeterministicAndAccurateOnConstantColour) {
  const auto img = random_image(1);
  EXPECT_EQ(jpeg_defense(img, 75), jpeg_defense(img, 75));
  RgbImage flat(16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      flat.at(y, x, 0) = 0.8;
      flat.at(y, x, 1) = 0.3;
      flat.at(y, x, 2) = 0.55;
    }
  EXPECT_LT(max_abs_diff(jpeg_defense(flat, 75).tensor(), flat.tensor()), 0.02);
  EXPECT_THROW(jpeg_defense(img, 0), Error);
}

TEST(BitDepth, FormulaEndpointsAndIdempotence) {
  RgbImage img(1, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 0.0;
    img.at(0, 1, c) = 0.5;
    img.at(0, 2, c) = 1.0;
  }
  const auto q = bit_depth_squeeze(img, 4);
  EXPECT_EQ(q.at(0, 0, 0), 0.0);
  EXPECT_NEAR(q.at(0, 1, 0), 8.0 / 15.0, 1e-15);
  EXPECT_EQ(q.at(0, 2, 0), 1.0);
  for (int bits = 1; bits <= 8; ++bits) {
    const auto once = bit_depth_squeeze(random_image(2), bits);
    EXPECT_EQ(bit_depth_squeeze(once, bits), once);  // bit-exact
  }
  EXPECT_THROW(bit_depth_squeeze(img, 0), Error);
  EXPECT_THROW(bit_depth_squeeze(img, 9), Error);
}

TEST(Median, MatchesScipyReflectMode) {
  const auto img = from_rows({{0.64, 0.27, 0.04, 0.02, 0.81, 0.91},
                              {0.61, 0.73, 0.54, 0.94, 0.82, 0.00},
                              {0.86, 0.03, 0.73, 0.18, 0.86, 0.54},
                              {0.30, 0.42, 0.03, 0.12, 0.67, 0.65},
                              {0.62, 0.38, 1.00, 0.98, 0.69, 0.65}});
  // scipy.ndimage.median_filter(a, size=2 / 3, mode='reflect')
  const auto m2 = from_rows({{0.64, 0.64, 0.27, 0.04, 0.81, 0.91},
                             {0.64, 0.64, 0.54, 0.54, 0.82, 0.82},
                             {0.86, 0.73, 0.73, 0.73, 0.86, 0.82},
                             {0.86, 0.42, 0.42, 0.18, 0.67, 0.67},
                             {0.62, 0.42, 0.42, 0.98, 0.69, 0.67}});
  const auto m3 = from_rows({{0.64, 0.54, 0.27, 0.54, 0.81, 0.82},
                             {0.64, 0.61, 0.27, 0.73, 0.81, 0.81},
                             {0.61, 0.54, 0.42, 0.67, 0.65, 0.65},
                             {0.42, 0.42, 0.38, 0.69, 0.65, 0.65},
                             {0.42, 0.42, 0.42, 0.69, 0.67, 0.65}});
  EXPECT_EQ(median_filter(img, 2, 2), m2);
  EXPECT_EQ(median_filter(img, 3, 3), m3);
}

TEST(Median, ImpulseRemovedConstantKeptRangeBounded) {
  RgbImage dark(7, 7, 0.1);
  dark.at(3, 3, 0) = dark.at(3, 3, 1) = dark.at(3, 3, 2) = 1.0;
  EXPECT_EQ(median_filter(dark, 3, 3).at(3, 3, 0), 0.1);
  const RgbImage flat(5, 5, 0.42);
  EXPECT_EQ(median_filter(flat, 2, 2), flat);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto img = RgbImage(testkit::random_tensor({3, 9, 11}, s, 0.2, 0.7));
    for (std::size_t w : {2, 3}) {
      const auto [lo, hi] = value_range(median_filter(img, w, w));
      const auto [ilo, ihi] = value_range(img);
      EXPECT_GE(lo, ilo);
      EXPECT_LE(hi, ihi);
    }
  }
}

TEST(Nlm, ConstantImageAndRange) {
  const RgbImage flat(12, 12, 100.0 / 255.0);
  EXPECT_LE(max_abs_diff(nlm_denoise(flat).tensor(), flat.tensor()), 1.0 / 255.0 + 1e-12);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto img = io::quantize8(RgbImage(testkit::random_tensor({3, 16, 16}, s, 0.2, 0.7)));
    const auto [lo, hi] = value_range(nlm_denoise(img));
    const auto [ilo, ihi] = value_range(img);
    // Colour NLM runs in Lab; the 8-bit round trip can move extremes by a step or two.
    EXPECT_GE(lo, ilo - 2.0 / 255.0);
    EXPECT_LE(hi, ihi + 2.0 / 255.0);
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
  }
}

TEST(DefenseSpec, ParseAndNames) {
  EXPECT_EQ(DefenseSpec::parse("jpeg:75").name(), "JPEG75");
  EXPECT_EQ(DefenseSpec::parse("bits:4").name(), "4-bit");
  EXPECT_EQ(DefenseSpec::parse("median:3x3").name(), "3x3");
  EXPECT_EQ(DefenseSpec::parse("nlm:11-3-4").name(), "11-3-4");
  EXPECT_EQ(DefenseSpec::parse("robust:adv-res152").model_tag, "adv-res152");
  EXPECT_THROW(DefenseSpec::parse("median:4x4"), Error);
  EXPECT_THROW(DefenseSpec::parse("bits:x"), Error);
  EXPECT_THROW(DefenseSpec::parse("blur:3"), Error);
  EXPECT_THROW(DefenseSpec::parse("robust:"), Error);
}

TEST(EvaluateDefended, IdentityReproducesUndefendedRates) {
  const auto clf = models::toy::make_classifier(2, 16, 3);
  std::vector<AttackResult> batch;
  std::size_t mis = 0, hit = 0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    AttackResult r;
    r.original = random_image(s);
    r.adversarial = random_image(100 + s);
    r.label = s % 3;
    r.target = (s + 1) % 3;
    const auto pred = clf.classify(r.adversarial).label;
    mis += pred != r.label;
    hit += pred == r.target;
    batch.push_back(r);
  }
  const auto rep = evaluate_defended(batch, DefenseSpec::identity(), clf, "x");
  EXPECT_EQ(rep.samples, 6u);
  EXPECT_DOUBLE_EQ(rep.misclassification, 100.0 * double(mis) / 6.0);
  EXPECT_DOUBLE_EQ(rep.targeted_retention, 100.0 * double(hit) / 6.0);
  // A batch whose "adversarial" images are correctly classified: 0%.
  for (auto& r : batch) r.label = clf.classify(r.adversarial).label;
  EXPECT_EQ(evaluate_defended(batch, DefenseSpec::jpeg(100), clf).misclassification,
            evaluate_defended(batch, DefenseSpec::identity(), clf).misclassification);
  EXPECT_EQ(evaluate_defended(batch, DefenseSpec::identity(), clf).misclassification, 0.0);
  EXPECT_THROW(evaluate_defended({}, DefenseSpec::identity(), clf), Error);
  EXPECT_THROW(evaluate_defended(batch, DefenseSpec::robust_model("r"), clf), Error);
  EXPECT_NO_THROW(evaluate_defended(batch, DefenseSpec::robust_model("r"), clf, "x", &clf));
}

TEST(EvaluateDefended, TableLayout) {
  const std::vector<DefenseReport> reps{{"BIM", "JPEG75", 20, 12.5, 5.0},
                                        {"BIM", "4-bit", 20, 10.0, 0.0},
                                        {"cAdv1", "JPEG75", 20, 55.0, 40.0}};
  EXPECT_EQ(defense_table_csv(reps), "attack,JPEG75,4-bit\nBIM,12.50,10.00\ncAdv1,55.00,\n");
  EXPECT_EQ(defense_table_csv(reps, true), "attack,JPEG75,4-bit\nBIM,5.00,0.00\ncAdv1,40.00,\n");
}

TEST(Bim, StaysInEpsilonBallAndFlipsToyClassifier) {
  const auto clf = models::toy::make_classifier(2, 16, 3);
  const auto img = random_image(7);
  const auto start = clf.classify(img).label;
  const std::size_t target = (start + 1) % 3;
  BimConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.iters = 20;
  const auto res = bim_attack(clf, img, target, cfg);
  EXPECT_LE(res.norms.linf, cfg.epsilon + 1e-12);
  EXPECT_TRUE(res.success);
  EXPECT_EQ(clf.classify(res.adversarial).label, target);
}
