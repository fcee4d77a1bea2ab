#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "zsm/core_ops.hpp"

using namespace zsm;
using zsm::test::check_gradients;
using zsm::test::naive_conv;
using zsm::test::naive_deformable_conv;
using zsm::test::project;
using zsm::test::random_conv;
using zsm::test::random_param;
using zsm::test::random_tensor;

namespace {

Tensor<double> ramp(int h, int w) {
  Tensor<double> t(1, 1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) t.at(0, 0, y, x) = 10.0 * y + x;
  return t;
}

}  // namespace

TEST(BilinearSample, IntegerMidpointAndOutside) {
  const auto f = ramp(5, 5);
  EXPECT_EQ(bilinear_sample(f, 3.0, 2.0, 0, 0), f.at(0, 0, 3, 2));
  EXPECT_DOUBLE_EQ(bilinear_sample(f, 2.0, 1.5, 0, 0),
                   0.5 * f.at(0, 0, 2, 1) + 0.5 * f.at(0, 0, 2, 2));
  EXPECT_EQ(bilinear_sample(f, -1.0, 0.0, 0, 0), 0.0);
  EXPECT_EQ(bilinear_sample(f, 0.0, 5.0, 0, 0), 0.0);
}

TEST(BilinearSample, PartialOverlapAtBorderUsesZeroPadding) {
  const auto f = ramp(4, 4);
  // Half a pixel above the grid: half of row 0 and half of zero.
  EXPECT_DOUBLE_EQ(bilinear_sample(f, -0.5, 2.0, 0, 0), 0.5 * f.at(0, 0, 0, 2));
  EXPECT_DOUBLE_EQ(bilinear_sample(f, 3.25, 3.0, 0, 0), 0.75 * f.at(0, 0, 3, 3));
}

TEST(BilinearSample, MatchesNaiveOracle) {
  Rng rng(4);
  const auto f = random_tensor<double>({2, 3, 6, 7}, rng);
  for (int i = 0; i < 200; ++i) {
    const double y = rng.uniform(-2, 8), x = rng.uniform(-2, 9);
    const int c = static_cast<int>(rng.below(3)), b = static_cast<int>(rng.below(2));
    EXPECT_NEAR(bilinear_sample(f, y, x, c, b), zsm::test::naive_bilinear(f, b, c, y, x), 1e-14);
  }
}

TEST(Conv2d, MatchesNaiveLoop) {
  Rng rng(5);
  for (int k : {1, 3, 5}) {
    const auto x = random_tensor<double>({2, 3, 6, 5}, rng);
    const auto w = random_conv<double>(3, 4, k, rng);
    const auto out = conv2d(Var<double>(x), w);
    const auto ref = naive_conv(x, w.weight.value(), &w.bias.value());
    EXPECT_LT(max_abs_diff(out.value(), ref), 1e-12) << "kernel " << k;
  }
}

TEST(Conv2d, RejectsEvenKernelsAndChannelMismatch) {
  Rng rng(6);
  const Var<double> x(random_tensor<double>({1, 3, 4, 4}, rng));
  EXPECT_THROW(conv2d(x, random_conv<double>(3, 2, 2, rng)), std::invalid_argument);
  EXPECT_THROW(conv2d(x, random_conv<double>(4, 2, 3, rng)), std::invalid_argument);
}

TEST(DeformableConv, ShiftedRampExample) {
  // 1x1 identity kernel, constant offset dx = +1 on the ramp f(y, x) = x.
  Tensor<double> x(1, 1, 5, 5);
  for (int y = 0; y < 5; ++y)
    for (int c = 0; c < 5; ++c) x.at(0, 0, y, c) = c;
  Tensor<double> off(1, 2, 5, 5);
  for (int y = 0; y < 5; ++y)
    for (int c = 0; c < 5; ++c) off.at(0, 1, y, c) = 1.0;
  ConvWeights<double> w{Var<double>(Tensor<double>(1, 1, 1, 1, 1.0)), Var<double>()};
  const auto out = deformable_conv(Var<double>(x), Var<double>(off), w, 1).value();
  for (int y = 0; y < 5; ++y) {
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out.at(0, 0, y, c), c + 1.0);
    EXPECT_EQ(out.at(0, 0, y, 4), 0.0);
  }
}

TEST(DeformableConv, ZeroOffsetsEqualConvolution) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int groups = trial % 2 == 0 ? 1 : 2;
    const auto x = random_tensor<double>({2, 4, 7, 6}, rng);
    const auto w = random_conv<double>(4, 3, 3, rng);
    const Var<double> off(Tensor<double>(2, 2 * 9 * groups, 7, 6));
    const auto a = deformable_conv(Var<double>(x), off, w, groups).value();
    const auto b = conv2d(Var<double>(x), w).value();
    EXPECT_LT(max_abs_diff(a, b), 1e-10);
  }
  // Single precision tolerance.
  const auto xf = random_tensor<float>({1, 4, 8, 8}, rng);
  const auto wf = random_conv<float>(4, 4, 3, rng);
  const Var<float> offf(Tensor<float>(1, 2 * 9 * 4, 8, 8));
  EXPECT_LT(max_abs_diff(deformable_conv(Var<float>(xf), offf, wf, 4).value(),
                         conv2d(Var<float>(xf), wf).value()),
            1e-5f);
}

TEST(DeformableConv, MatchesNaiveLoopOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int b = 1 + static_cast<int>(rng.below(2));
    const int groups = 1 + static_cast<int>(rng.below(2));
    const int c = groups * (1 + static_cast<int>(rng.below(2)));
    const int h = 3 + static_cast<int>(rng.below(6)), w = 3 + static_cast<int>(rng.below(6));
    const int k = rng.below(2) == 0 ? 1 : 3;
    const auto x = random_tensor<double>({b, c, h, w}, rng);
    const auto off = random_tensor<double>({b, 2 * k * k * groups, h, w}, rng, -2.5, 2.5);
    const auto wt = random_conv<double>(c, 3, k, rng, trial % 3 != 0);
    const auto out = deformable_conv(Var<double>(x), Var<double>(off), wt, groups).value();
    const auto ref = naive_deformable_conv(x, off, wt.weight.value(),
                                           wt.bias.defined() ? &wt.bias.value() : nullptr, groups);
    EXPECT_LT(max_abs_diff(out, ref), 1e-12);
  }
}

TEST(DeformableConv, RejectsBadOffsetChannels) {
  Rng rng(9);
  const Var<double> x(random_tensor<double>({1, 4, 5, 5}, rng));
  const auto w = random_conv<double>(4, 2, 3, rng);
  EXPECT_THROW(deformable_conv(x, Var<double>(Tensor<double>(1, 17, 5, 5)), w, 1),
               std::invalid_argument);
  EXPECT_THROW(deformable_conv(x, Var<double>(Tensor<double>(1, 18, 4, 5)), w, 1),
               std::invalid_argument);
  EXPECT_THROW(deformable_conv(x, Var<double>(Tensor<double>(1, 54, 5, 5)), w, 3),
               std::invalid_argument);
}

TEST(DeformableConv, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param<double>({1, 2, 5, 5}, rng);
    auto off = random_param<double>({1, 18, 5, 5}, rng, -1.5, 1.5);
    auto w = random_conv<double>(2, 3, 3, rng);
    const auto probe = random_tensor<double>({1, 3, 5, 5}, rng);
    auto loss = [&] { return project(deformable_conv(x, off, w, 1), probe); };
    const auto r = check_gradients(loss, {x, off, w.weight, w.bias}, rng, 80, 1e-5);
    EXPECT_LT(r.rel_error, 1e-4) << "trial " << trial;
    EXPECT_GT(r.analytic_norm, 0);
  }
}

TEST(PixelShuffle, IdentityLayoutAndRoundTrip) {
  Rng rng(11);
  const auto x = random_tensor<double>({2, 8, 3, 4}, rng);
  EXPECT_EQ(pixel_shuffle(Var<double>(x), 1).value(), x);

  Tensor<double> abcd(1, 4, 1, 1);
  for (int c = 0; c < 4; ++c) abcd[c] = c + 1;  // a=1, b=2, c=3, d=4
  const auto s = pixel_shuffle(Var<double>(abcd), 2).value();
  ASSERT_EQ(s.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(s.at(0, 0, 0, 0), 1);
  EXPECT_EQ(s.at(0, 0, 0, 1), 2);
  EXPECT_EQ(s.at(0, 0, 1, 0), 3);
  EXPECT_EQ(s.at(0, 0, 1, 1), 4);

  for (int trial = 0; trial < 10; ++trial) {
    const auto r = random_tensor<double>({1, 12, 3, 5}, rng);
    EXPECT_EQ(pixel_unshuffle(pixel_shuffle(Var<double>(r), 2).value(), 2), r);
  }
  EXPECT_THROW(pixel_shuffle(Var<double>(Tensor<double>(1, 6, 2, 2)), 2), std::invalid_argument);
}

TEST(PixelShuffle, Gradient) {
  Rng rng(12);
  auto x = random_param<double>({1, 8, 2, 3}, rng);
  const auto probe = random_tensor<double>({1, 2, 4, 6}, rng);
  const auto r = check_gradients([&] { return project(pixel_shuffle(x, 2), probe); }, {x}, rng);
  EXPECT_LT(r.rel_error, 1e-8);
}

TEST(Charbonnier, Examples) {
  Rng rng(13);
  const auto a = random_tensor<double>({1, 3, 4, 4}, rng);
  EXPECT_NEAR(charbonnier(Var<double>(a), Var<double>(a), 1e-3).item(), 1e-3, 1e-15);

  Tensor<double> p(1, 1, 1, 1, 3e-3), t(1, 1, 1, 1, 0.0);
  EXPECT_NEAR(charbonnier(Var<double>(p), Var<double>(t), 1e-3).item(), std::sqrt(1e-5), 1e-15);

  auto pred = Var<double>(a, true);
  backward(charbonnier(pred, Var<double>(a), 1e-3));
  const auto grad = pred.grad();
  for (double g : grad.span()) EXPECT_EQ(g, 0.0);

  EXPECT_THROW(charbonnier(Var<double>(a), Var<double>(Tensor<double>(1, 3, 4, 5)), 1e-3),
               std::invalid_argument);
}

TEST(Charbonnier, PerElementMean) {
  Tensor<double> p(1, 1, 1, 2), t(1, 1, 1, 2);
  p[0] = 0.3;
  p[1] = -0.4;
  const double expect = 0.5 * (std::sqrt(0.09 + 1e-6) + std::sqrt(0.16 + 1e-6));
  EXPECT_NEAR(charbonnier(Var<double>(p), Var<double>(t), 1e-3).item(), expect, 1e-15);
}

TEST(Charbonnier, Gradient) {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_param<double>({1, 2, 3, 3}, rng);
    const Var<double> t(random_tensor<double>({1, 2, 3, 3}, rng));
    const auto r = check_gradients([&] { return charbonnier(p, t, 1e-3); }, {p}, rng);
    EXPECT_LT(r.rel_error, 1e-4);
  }
}

TEST(ResidualBlock, ZeroSecondConvIsIdentityAndShapePreserved) {
  Rng rng(15);
  const auto x = random_tensor<double>({2, 4, 5, 6}, rng);
  auto w1 = random_conv<double>(4, 4, 3, rng);
  ConvWeights<double> w2{Var<double>(Tensor<double>(4, 4, 3, 3)),
                         Var<double>(Tensor<double>(1, 4, 1, 1))};
  const auto out = residual_block(Var<double>(x), w1, w2).value();
  EXPECT_EQ(out, x);
  auto w2r = random_conv<double>(4, 4, 3, rng);
  EXPECT_EQ(residual_block(Var<double>(x), w1, w2r).shape(), x.shape());
  EXPECT_THROW(residual_block(Var<double>(x), random_conv<double>(3, 4, 3, rng), w2r),
               std::invalid_argument);
}

TEST(ResidualBlock, MatchesComposedOracle) {
  Rng rng(16);
  const auto x = random_tensor<double>({1, 3, 5, 5}, rng);
  const auto w1 = random_conv<double>(3, 3, 3, rng);
  const auto w2 = random_conv<double>(3, 3, 3, rng);
  auto mid = naive_conv(x, w1.weight.value(), &w1.bias.value());
  for (auto& v : mid.span()) v = v > 0 ? v : 0.1 * v;
  auto ref = naive_conv(mid, w2.weight.value(), &w2.bias.value());
  ref += x;
  EXPECT_LT(max_abs_diff(residual_block(Var<double>(x), w1, w2).value(), ref), 1e-12);
}

TEST(ResidualBlock, GradientWrtWeights) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_param<double>({1, 3, 5, 5}, rng);
    auto w1 = random_conv<double>(3, 3, 3, rng);
    auto w2 = random_conv<double>(3, 3, 3, rng);
    const auto probe = random_tensor<double>({1, 3, 5, 5}, rng);
    const auto r = check_gradients([&] { return project(residual_block(x, w1, w2), probe); },
                                   {x, w1.weight, w1.bias, w2.weight, w2.bias}, rng);
    EXPECT_LT(r.rel_error, 1e-4);
  }
}

TEST(ElementwiseOps, Gradients) {
  Rng rng(18);
  auto a = random_param<double>({1, 2, 3, 3}, rng);
  auto b = random_param<double>({1, 2, 3, 3}, rng);
  const auto probe = random_tensor<double>({1, 4, 3, 3}, rng);
  auto loss = [&] {
    auto s = sigmoid(mul(a, b));
    auto t = tanh(sub(a, scale(b, 0.5)));
    auto l = leaky_relu(add(s, t));
    return project(concat_channels(l, slice_channels(concat_channels(a, b), 1, 2)), probe);
  };
  EXPECT_LT(check_gradients(loss, {a, b}, rng).rel_error, 1e-4);
}

TEST(ResizeOps, AvgPoolAndBilinearGradients) {
  Rng rng(19);
  auto x = random_param<double>({1, 2, 6, 4}, rng);
  const auto probe = random_tensor<double>({1, 2, 6, 4}, rng);
  auto loss = [&] { return project(resize_bilinear(avg_pool2(x), 6, 4), probe); };
  EXPECT_LT(check_gradients(loss, {x}, rng).rel_error, 1e-6);
  // Odd sizes floor, as the alignment pyramid expects.
  EXPECT_EQ(avg_pool2(Var<double>(Tensor<double>(1, 1, 5, 4))).shape(), (Shape{1, 1, 2, 2}));
  EXPECT_THROW(avg_pool2(Var<double>(Tensor<double>(1, 1, 1, 4))), std::invalid_argument);
}

TEST(CoreOps, Deterministic) {
  Rng rng(20);
  const auto x = random_tensor<float>({1, 4, 8, 8}, rng);
  const auto off = random_tensor<float>({1, 36, 8, 8}, rng);
  const auto w = random_conv<float>(4, 4, 3, rng);
  const auto a = deformable_conv(Var<float>(x), Var<float>(off), w, 2).value();
  const auto b = deformable_conv(Var<float>(x), Var<float>(off), w, 2).value();
  EXPECT_EQ(a, b);
}
