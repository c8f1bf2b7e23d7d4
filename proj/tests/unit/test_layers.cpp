#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "poolnet/layers.hpp"

using namespace poolnet;

namespace {

double max_abs_diff(const Tensor<double> &a, const Tensor<double> &b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_error(const std::vector<double> &numeric, const Tensor<double> &analytic) {
  double scale = 0;
  for (double v : numeric)
    scale = std::max(scale, std::abs(v));
  double worst = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i)
    worst = std::max(worst, std::abs(numeric[i] - analytic[i]) /
                                std::max({std::abs(numeric[i]), std::abs(analytic[i]), 1e-3 * scale, 1e-8}));
  return worst;
}

double dot(const Tensor<double> &a, const Tensor<double> &b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

} // namespace

TEST(Conv, MatchesDirectLoopOracle) {
  struct Case {
    Shape in;
    std::size_t out, k, pad;
  };
  const Case cases[] = {{{2, 3, 7, 6}, 4, 3, 1}, {{1, 1, 9, 9}, 2, 5, 0}, {{3, 2, 5, 5}, 3, 1, 0}, {{1, 4, 6, 8}, 5, 3, 0}};
  std::uint64_t seed = 10;
  for (const auto &c : cases) {
    ConvLayer<double> layer(c.in.c, c.out, c.k, c.pad);
    layer.filters = oracle::gaussian(layer.filters.shape(), seed++);
    layer.bias = oracle::gaussian(layer.bias.shape(), seed++);
    const auto x = oracle::gaussian(c.in, seed++);
    EXPECT_LT(max_abs_diff(conv_forward(layer, x), oracle::conv(x, layer.filters, layer.bias, c.pad)), 1e-12);
  }
}

TEST(Conv, FloatAgreesWithDouble) {
  ConvLayer<double> d(3, 8, 3, 1);
  d.filters = oracle::gaussian(d.filters.shape(), 1);
  d.bias = oracle::gaussian(d.bias.shape(), 2);
  const auto x = oracle::gaussian({2, 3, 16, 16}, 3);
  ConvLayer<float> f(3, 8, 3, 1);
  f.filters = d.filters.cast<float>();
  f.bias = d.bias.cast<float>();
  const auto yd = conv_forward(d, x);
  const auto yf = conv_forward(f, x.cast<float>());
  for (std::size_t i = 0; i < yd.size(); ++i)
    EXPECT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(Conv, DeltaFilterIsIdentity) {
  ConvLayer<double> layer(1, 1, 3, 1);
  layer.filters.fill(0.0);
  layer.filters.at(0, 0, 1, 1) = 1.0;
  const auto x = oracle::gaussian({1, 1, 5, 5}, 4);
  EXPECT_EQ(conv_forward(layer, x), x);

  const auto g = conv_backward(layer, x, tensor_full<double>({1, 1, 5, 5}, 1.0));
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c)
      EXPECT_DOUBLE_EQ(g.input.at(0, 0, r, c), 1.0);
}

TEST(Conv, OutputExtents) {
  ConvLayer<float> layer(3, 6, 5, 0);
  EXPECT_EQ(layer.output_shape({1, 3, 32, 32}), (Shape{1, 6, 28, 28}));
  EXPECT_THROW(layer.output_shape({1, 2, 32, 32}), ShapeError);
  EXPECT_THROW(layer.output_shape({1, 3, 4, 4}), ShapeError);

  ConvLayer<double> ones(1, 1, 3, 0);
  ones.filters.fill(1.0);
  const auto y = conv_forward(ones, tensor_full<double>({1, 1, 3, 3}, 1.0));
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  ConvLayer<double> layer(2, 3, 3, 1);
  layer.filters = oracle::gaussian(layer.filters.shape(), 5);
  layer.bias = oracle::gaussian(layer.bias.shape(), 6);
  auto x = oracle::gaussian({2, 2, 5, 4}, 7);
  const auto r = oracle::gaussian(layer.output_shape(x.shape()), 8);
  const auto loss = [&] { return dot(oracle::conv(x, layer.filters, layer.bias, 1), r); };
  const auto g = conv_backward(layer, x, r);
  EXPECT_LT(rel_error(oracle::finite_difference(x, loss, 1e-5), g.input), 1e-6);
  EXPECT_LT(rel_error(oracle::finite_difference(layer.filters, loss, 1e-5), g.params[0]), 1e-6);
  EXPECT_LT(rel_error(oracle::finite_difference(layer.bias, loss, 1e-5), g.params[1]), 1e-6);
}

TEST(Conv, ZeroUpstreamGivesZeroGradients) {
  ConvLayer<double> layer(2, 2, 3, 1);
  layer.filters = oracle::gaussian(layer.filters.shape(), 9);
  const auto x = oracle::gaussian({1, 2, 4, 4}, 10);
  const auto g = conv_backward(layer, x, Tensor<double>(Shape{1, 2, 4, 4}));
  for (const auto *t : {&g.input, &g.params[0], &g.params[1]})
    for (double v : t->data())
      EXPECT_EQ(v, 0.0);
}

TEST(Fc, MatchesOracleAndFiniteDifferences) {
  FcLayer<double> layer(10, 7);
  layer.weights = oracle::gaussian(layer.weights.shape(), 11);
  layer.bias = oracle::gaussian(layer.bias.shape(), 12);
  auto x = oracle::gaussian({3, 10, 1, 1}, 13);
  EXPECT_LT(max_abs_diff(fc_forward(layer, x), oracle::fc(x, layer.weights, layer.bias)), 1e-12);

  const auto r = oracle::gaussian({3, 7, 1, 1}, 14);
  const auto loss = [&] { return dot(oracle::fc(x, layer.weights, layer.bias), r); };
  const auto g = fc_backward(layer, x, r);
  EXPECT_LT(rel_error(oracle::finite_difference(x, loss, 1e-5), g.input), 1e-4);
  EXPECT_LT(rel_error(oracle::finite_difference(layer.weights, loss, 1e-5), g.params[0]), 1e-4);
  EXPECT_LT(rel_error(oracle::finite_difference(layer.bias, loss, 1e-5), g.params[1]), 1e-4);
}

TEST(Fc, IdentityAndBiasOnly) {
  FcLayer<double> id(4, 4);
  id.weights.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i)
    id.weights[i * 4 + i] = 1.0;
  const auto x = oracle::gaussian({2, 4, 1, 1}, 15);
  EXPECT_EQ(fc_forward(id, x), x);

  FcLayer<double> bias_only(4, 3);
  bias_only.weights.fill(0.0);
  bias_only.bias = Tensor<double>(Shape{1, 1, 1, 3}, std::vector<double>{1, -2, 3});
  const auto y = fc_forward(bias_only, x);
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_EQ(y[n * 3 + 0], 1.0);
    EXPECT_EQ(y[n * 3 + 1], -2.0);
    EXPECT_EQ(y[n * 3 + 2], 3.0);
  }
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  BatchNormLayer<double> bn(3);
  const auto x = oracle::gaussian({4, 3, 5, 5}, 16);
  const auto y = batchnorm_forward(bn, x, Mode::Train).y;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    std::size_t m = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = y[(n * 3 + c) * 25 + i];
        s += v;
        s2 += v * v;
        ++m;
      }
    EXPECT_NEAR(s / m, 0.0, 1e-12);
    EXPECT_NEAR(s2 / m, 1.0, 1e-3);
  }
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance) {
  BatchNormLayer<double> bn(1);
  Tensor<double> x(Shape{4, 1, 1, 1}, std::vector<double>{1, 2, 3, 6});
  batchnorm_forward(bn, x, Mode::Train);
  // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);

  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0;
  const auto y = batchnorm_forward(bn, x, Mode::Eval).y;
  EXPECT_NEAR(y[3], (6.0 - 2.0) / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(bn.running_mean[0], 2.0);
}

TEST(BatchNorm, ConstantChannelMapsToBeta) {
  BatchNormLayer<double> bn(2);
  bn.beta = Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{0.25, -1.5});
  Tensor<double> x(Shape{3, 2, 2, 2});
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 4; ++i) {
      x[(n * 2 + 0) * 4 + i] = 7.0;
      x[(n * 2 + 1) * 4 + i] = -3.0;
    }
  const auto y = batchnorm_forward(bn, x, Mode::Train).y;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_DOUBLE_EQ(y[(n * 2 + 0) * 4 + i], 0.25);
      EXPECT_DOUBLE_EQ(y[(n * 2 + 1) * 4 + i], -1.5);
    }
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  BatchNormLayer<double> bn(2);
  bn.gamma = oracle::gaussian(bn.gamma.shape(), 17);
  bn.beta = oracle::gaussian(bn.beta.shape(), 18);
  auto x = oracle::gaussian({3, 2, 3, 2}, 19);
  const auto r = oracle::gaussian(x.shape(), 20);
  const auto loss = [&] {
    auto scratch = bn;
    return dot(batchnorm_forward(scratch, x, Mode::Train).y, r);
  };
  auto live = bn;
  const auto fwd = batchnorm_forward(live, x, Mode::Train);
  const auto g = batchnorm_backward(bn, fwd.cache, r);
  EXPECT_LT(rel_error(oracle::finite_difference(x, loss, 1e-5), g.input), 1e-4);
  EXPECT_LT(rel_error(oracle::finite_difference(bn.gamma, loss, 1e-5), g.params[0]), 1e-4);
  EXPECT_LT(rel_error(oracle::finite_difference(bn.beta, loss, 1e-5), g.params[1]), 1e-4);
}

TEST(Softmax, UniformLogitsGiveLogTen) {
  const Tensor<double> logits(Shape{3, 10, 1, 1}, 0.7);
  const std::vector<int> labels{0, 4, 9};
  const auto r = softmax_cross_entropy(logits, std::span<const int>(labels));
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
  const auto p = softmax(logits);
  for (double v : p.data())
    EXPECT_NEAR(v, 0.1, 1e-15);
}

TEST(Softmax, ConfidentCorrectLogitGivesNearZeroLoss) {
  Tensor<double> logits(Shape{1, 10, 1, 1});
  logits[3] = 60.0;
  const std::vector<int> label{3};
  EXPECT_LT(softmax_cross_entropy(logits, std::span<const int>(label)).loss, 1e-20);
  Tensor<float> big(Shape{1, 10, 1, 1});
  big[0] = 1e4f;
  const auto r = softmax_cross_entropy(big, std::span<const int>(label));
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  auto logits = oracle::gaussian({4, 10, 1, 1}, 21);
  const std::vector<int> labels{1, 2, 9, 0};
  const auto loss = [&] { return softmax_cross_entropy(logits, std::span<const int>(labels)).loss; };
  const auto g = softmax_cross_entropy(logits, std::span<const int>(labels)).grad;
  EXPECT_LT(rel_error(oracle::finite_difference(logits, loss, 1e-5), g), 1e-6);
}

TEST(Softmax, RejectsBadLabels) {
  const Tensor<double> logits(Shape{2, 10, 1, 1});
  const std::vector<int> bad{0, 10};
  EXPECT_THROW(softmax_cross_entropy(logits, std::span<const int>(bad)), std::out_of_range);
  const std::vector<int> short_labels{0};
  EXPECT_THROW(softmax_cross_entropy(logits, std::span<const int>(short_labels)), std::invalid_argument);
}

TEST(HeInit, MonteCarloStd) {
  for (auto scheme : {InitScheme::HeNormal, InitScheme::HeUniform}) {
    HeInit init(2, scheme);
    EXPECT_DOUBLE_EQ(init.stddev(), 1.0);
    Rng rng(42);
    double s = 0, s2 = 0;
    const int count = 1000000;
    for (int i = 0; i < count; ++i) {
      const double v = init.sample(rng);
      s += v;
      s2 += v * v;
    }
    const double mean = s / count;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(s2 / count - mean * mean), 1.0, 0.01);
  }
  EXPECT_DOUBLE_EQ(HeInit(8).stddev(), 0.5);
}

TEST(HeInit, ReplaysWithSameSeed) {
  Tensor<float> a(Shape{4, 3, 3, 3}), b(Shape{4, 3, 3, 3});
  Rng ra(7), rb(7);
  he_fill(a, 27, ra);
  he_fill(b, 27, rb);
  EXPECT_EQ(a, b);
}
