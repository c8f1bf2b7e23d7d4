#include <gtest/gtest.h>

#include <limits>

#include "poolnet/tensor.hpp"

using namespace poolnet;

TEST(Tensor, FullFillsEveryElement) {
  const auto z = tensor_full<float>({1, 1, 2, 2}, 0.0f);
  EXPECT_EQ(z.size(), 4u);
  for (float v : z.data())
    EXPECT_EQ(v, 0.0f);

  const auto s = tensor_full<double>({1, 1, 1, 1}, 3.5);
  EXPECT_EQ(s[0], 3.5);

  const auto ones = tensor_full<float>({2, 3, 4, 4}, 1.0f);
  EXPECT_EQ(ones.size(), 96u);
}

TEST(Tensor, RejectsZeroAndOverflowingShapes) {
  EXPECT_THROW(Tensor<float>(Shape{0, 1, 1, 1}), ShapeError);
  const std::size_t big = std::numeric_limits<std::size_t>::max() / 2;
  EXPECT_THROW(checked_size(Shape{big, 4, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, IndexIsRowMajorNchw) {
  Tensor<double> x(Shape{2, 3, 4, 5});
  EXPECT_EQ(x.index(1, 2, 3, 4), x.size() - 1);
  EXPECT_EQ(x.index(0, 1, 0, 0), 20u);
  x.at(1, 0, 2, 1) = 7.0;
  EXPECT_EQ(x.sample(1)[2 * 5 + 1], 7.0);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor<float> x(Shape{1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  const auto y = x.reshaped({2, 4, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 4, 1, 1}));
  EXPECT_EQ(y[5], 6.0f);
  EXPECT_THROW(x.reshaped({1, 1, 3, 3}), ShapeError);
}

TEST(Tensor, Relu) {
  Tensor<float> x(Shape{1, 1, 1, 3}, std::vector<float>{-1, 0, 2});
  EXPECT_EQ(relu(x).data()[0], 0.0f);
  EXPECT_EQ(relu(x).data()[1], 0.0f);
  EXPECT_EQ(relu(x).data()[2], 2.0f);

  const auto neg = relu(tensor_full<double>({1, 2, 3, 3}, -0.5));
  for (double v : neg.data())
    EXPECT_EQ(v, 0.0);

  Tensor<double> pos(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  EXPECT_EQ(relu(pos), pos);
}

TEST(Tensor, WindowIterCountsAndOrder) {
  Tensor<float> x(Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(i);
  const auto w = window_iter(x, 2);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[0].values, (std::vector<float>{0, 1, 4, 5}));
  EXPECT_EQ(w[1].values, (std::vector<float>{2, 3, 6, 7}));
  EXPECT_EQ(w[3].where.block_row, 1u);
  EXPECT_EQ(w[3].where.block_col, 1u);
  EXPECT_EQ(w[3].where.at(1, 1), 15u);

  EXPECT_EQ(window_iter(Tensor<float>(Shape{1, 1, 6, 6}), 3).size(), 4u);
  EXPECT_THROW(window_iter(Tensor<float>(Shape{1, 1, 6, 6}), 4), ShapeError);
  EXPECT_THROW(window_iter(Tensor<float>(Shape{1, 1, 6, 6}), 0), ShapeError);
}

TEST(Tensor, WindowIterCoversChannelsAndSamples) {
  const auto w = window_iter(Tensor<double>(Shape{2, 3, 4, 4}), 2);
  ASSERT_EQ(w.size(), 2u * 3u * 4u);
  EXPECT_EQ(w[4].where.c, 1u);
  EXPECT_EQ(w[12].where.n, 1u);
}

TEST(Tensor, ArgmaxWindow) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_EQ(argmax_window<double>(a).index, 3u);
  EXPECT_EQ(argmax_window<double>(a).value, 4.0);

  const std::vector<double> ties{5, 5, 5, 5};
  EXPECT_EQ(argmax_window<double>(ties).index, 0u);

  const std::vector<double> neg{-3, -1, -2, -9};
  EXPECT_EQ(argmax_window<double>(neg).index, 1u);
  EXPECT_EQ(argmax_window<double>(neg).value, -1.0);

  EXPECT_THROW(argmax_window<double>(std::vector<double>{}), std::invalid_argument);
}
