#include <gtest/gtest.h>

#include <cmath>

#include "semadv/core/ops.hpp"
#include "semadv/core/optim.hpp"
#include "test_util.hpp"

using namespace semadv;
using semadv::testkit::gradient_check;
using semadv::testkit::random_tensor;

namespace {

// Weighted sum so that every output element contributes a distinct gradient.
ad::Var probe(const ad::Var& y, std::uint64_t seed = 99) {
  return ad::sum(ad::mul(y, ad::constant(random_tensor(y->shape(), seed))));
}

}  // namespace

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_DOUBLE_EQ(t[5], 1.5);
}

TEST(Autodiff, ElementwiseGradients) {
  const auto x = random_tensor({2, 3, 4}, 1);
  const auto other = ad::constant(random_tensor({2, 3, 4}, 2));
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::add(v, other)); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::sub(other, v)); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::mul(v, v)); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::tanh(v)); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::sigmoid(v)); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return ad::sum_squares(ad::add_scalar(v, 0.3)); }, x), 1e-6);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  auto x = ad::leaf(Tensor({1}, std::vector<double>{3.0}));
  auto y = ad::add(ad::mul(x, x), x);  // x^2 + x
  ad::backward(y);
  EXPECT_DOUBLE_EQ(x->grad_buffer()[0], 7.0);
}

TEST(Autodiff, ConvolutionGradients) {
  const auto x = random_tensor({2, 6, 5}, 3);
  const auto w = random_tensor({3, 2, 3, 3}, 4);
  const auto b = random_tensor({3}, 5);
  for (auto opt : {ad::Conv2dOptions{1, 1, 1}, ad::Conv2dOptions{2, 1, 1}, ad::Conv2dOptions{1, 2, 2}}) {
    EXPECT_LT(gradient_check([&](const ad::Var& v) {
      return probe(ad::conv2d(v, ad::constant(w), ad::constant(b), opt)); }, x), 1e-6);
    EXPECT_LT(gradient_check([&](const ad::Var& v) {
      return probe(ad::conv2d(ad::constant(x), v, ad::constant(b), opt)); }, w), 1e-6);
    EXPECT_LT(gradient_check([&](const ad::Var& v) {
      return probe(ad::conv2d(ad::constant(x), ad::constant(w), v, opt)); }, b), 1e-6);
  }
}

TEST(Autodiff, ConvolutionMatchesDirectSum) {
  const auto x = random_tensor({2, 4, 4}, 6);
  const auto w = random_tensor({1, 2, 3, 3}, 7);
  auto y = ad::conv2d(ad::constant(x), ad::constant(w), nullptr, {1, 1, 1});
  ASSERT_EQ(y->shape(), (Shape{1, 4, 4}));
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) {
      double s = 0.0;
      for (int c = 0; c < 2; ++c)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy < 0 || ix < 0 || iy >= 4 || ix >= 4) continue;
            s += x[(c * 4 + iy) * 4 + ix] * w[(c * 3 + ky) * 3 + kx];
          }
      EXPECT_NEAR(y->value[oy * 4 + ox], s, 1e-12);
    }
}

TEST(Autodiff, PoolingAndShapeGradients) {
  const auto x = random_tensor({3, 6, 6}, 8);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::max_pool2d(v, 2, 2)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::max_pool2d(v, 3, 2, 1)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::avg_pool2d(v, 2, 2)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::global_avg_pool(v)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::upsample_nearest(v, 9, 12)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::slice_channels(v, 1, 3)); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::concat_channels({v, ad::tanh(v)})); }, x), 1e-6);
  EXPECT_LT(gradient_check([](const ad::Var& v) { return probe(ad::softmax_channels(v)); }, x), 1e-6);
  const auto m = random_tensor({1, 6, 6}, 9);
  EXPECT_LT(gradient_check([&](const ad::Var& v) {
    return probe(ad::mul_broadcast_channels(ad::constant(x), v)); }, m), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) {
    return probe(ad::mul_broadcast_channels(v, ad::constant(m))); }, x), 1e-6);
}

TEST(Autodiff, LinearAlgebraGradients) {
  const auto a = random_tensor({3, 5}, 10), b = random_tensor({4, 5}, 11);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::matmul_nt(v, ad::constant(b))); }, a), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::matmul_nt(ad::constant(a), v)); }, b), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return probe(ad::matmul_nt(v, v)); }, a), 1e-6);
  const auto x = random_tensor({5}, 12);
  EXPECT_LT(gradient_check([&](const ad::Var& v) {
    return probe(ad::linear(v, ad::constant(a), ad::constant(random_tensor({3}, 13)))); }, x), 1e-6);
  EXPECT_LT(gradient_check([&](const ad::Var& v) { return ad::cross_entropy(v, 2); }, x), 1e-6);
}

TEST(Autodiff, CrossEntropyOfUniformLogitsIsLogV) {
  auto ce = ad::cross_entropy(ad::constant(Tensor({7}, 0.25)), 3);
  EXPECT_NEAR(ad::scalar(ce), std::log(7.0), 1e-12);
  auto big = ad::cross_entropy(ad::constant(Tensor({3}, std::vector<double>{1000.0, 0.0, -1000.0})), 0);
  EXPECT_NEAR(ad::scalar(big), 0.0, 1e-12);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  Tensor p({3}, std::vector<double>{1.0, -2.0, 0.5});
  optim::Adam adam({.lr = 0.1});
  adam.step({&p}, {Tensor({3}, std::vector<double>{10.0, -0.001, 3.0})});
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -1.9, 1e-4);
  EXPECT_NEAR(p[2], 0.4, 1e-6);
}

TEST(Lbfgs, MinimisesRosenbrock) {
  std::vector<double> x{-1.2, 1.0};
  optim::Objective f = [](std::span<const double> v, std::span<double> g) {
    const double a = 1.0 - v[0], b = v[1] - v[0] * v[0];
    g[0] = -2.0 * a - 400.0 * v[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  optim::LbfgsOptions opt;
  opt.max_steps = 200;
  const auto rep = optim::lbfgs_minimize(x, f, opt);
  EXPECT_NEAR(x[0], 1.0, 1e-5);
  EXPECT_NEAR(x[1], 1.0, 1e-5);
  EXPECT_LT(rep.final_loss, 1e-10);
}

TEST(Lbfgs, StepAccountingOnQuadratic) {
  // Ill-conditioned quadratic: never converges within 14 steps from here.
  std::vector<double> x(50);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.1 * double(i);
  optim::Objective f = [](std::span<const double> v, std::span<double> g) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double c = std::pow(1.3, double(i));
      s += 0.5 * c * v[i] * v[i];
      g[i] = c * v[i];
    }
    return s;
  };
  const auto rep = optim::lbfgs_minimize(x, f, {});
  EXPECT_EQ(rep.steps, 14);
  EXPECT_EQ(rep.stop, optim::LbfgsStop::StepLimit);
  EXPECT_LT(rep.final_loss, rep.initial_loss);
}
