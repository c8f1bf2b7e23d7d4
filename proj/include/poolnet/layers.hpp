#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "poolnet/random.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet {

enum class Mode { Train, Eval };

enum class InitScheme { HeNormal, HeUniform };

/// Gradients for each parameter of a layer (in the layer's parameter order)
/// plus the gradient with respect to the layer input.
template <typename T> struct GradientBundle {
  std::vector<Tensor<T>> params;
  Tensor<T> input;
};

/// Stride-1 square convolution (cross-correlation, no kernel flip).
template <typename T> struct ConvLayer {
  Tensor<T> filters; ///< (out_depth, in_depth, K, K)
  Tensor<T> bias;    ///< (1, 1, 1, out_depth)
  std::size_t padding = 0;

  ConvLayer() = default;
  ConvLayer(std::size_t in_depth, std::size_t out_depth, std::size_t kernel, std::size_t padding);

  std::size_t in_depth() const noexcept { return filters.shape().c; }
  std::size_t out_depth() const noexcept { return filters.shape().n; }
  std::size_t kernel() const noexcept { return filters.shape().h; }
  std::size_t fan_in() const noexcept { return in_depth() * kernel() * kernel(); }

  /// Output extent is input + 2*padding - K + 1 on each axis.
  Shape output_shape(const Shape &in) const;
};

template <typename T> Tensor<T> conv_forward(const ConvLayer<T> &layer, const Tensor<T> &x);

/// params = {filters, bias}.
template <typename T>
GradientBundle<T> conv_backward(const ConvLayer<T> &layer, const Tensor<T> &x, const Tensor<T> &grad_out);

/// Affine map over the flattened per-sample extent.
template <typename T> struct FcLayer {
  Tensor<T> weights; ///< (1, 1, out_units, in_units)
  Tensor<T> bias;    ///< (1, 1, 1, out_units)

  FcLayer() = default;
  FcLayer(std::size_t in_units, std::size_t out_units);

  std::size_t in_units() const noexcept { return weights.shape().w; }
  std::size_t out_units() const noexcept { return weights.shape().h; }
};

/// x is (n, ...) with in_units elements per sample; result is (n, out_units, 1, 1).
template <typename T> Tensor<T> fc_forward(const FcLayer<T> &layer, const Tensor<T> &x);

/// params = {weights, bias}; input gradient has x's shape.
template <typename T>
GradientBundle<T> fc_backward(const FcLayer<T> &layer, const Tensor<T> &x, const Tensor<T> &grad_out);

/// Per-channel batch normalization with affine scale/shift.
template <typename T> struct BatchNormLayer {
  Tensor<T> gamma; ///< (1, 1, 1, C), starts at 1
  Tensor<T> beta;  ///< (1, 1, 1, C), starts at 0
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t channels);

  std::size_t channels() const noexcept { return running_mean.size(); }
};

template <typename T> struct BatchNormCache {
  Mode mode = Mode::Train;
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

template <typename T> struct BatchNormResult {
  Tensor<T> y;
  BatchNormCache<T> cache;
};

/// Train mode normalizes with batch statistics and updates the running
/// averages (unbiased variance); eval mode uses the running averages.
template <typename T> BatchNormResult<T> batchnorm_forward(BatchNormLayer<T> &layer, const Tensor<T> &x, Mode mode);

/// params = {gamma, beta}.
template <typename T>
GradientBundle<T> batchnorm_backward(const BatchNormLayer<T> &layer, const BatchNormCache<T> &cache,
                                     const Tensor<T> &grad_out);

template <typename T> struct LossResult {
  T loss{};
  Tensor<T> grad; ///< d(mean loss)/d(logits)
};

/// Row-wise softmax over the per-sample extent.
template <typename T> Tensor<T> softmax(const Tensor<T> &logits);

/// Mean cross-entropy over the batch; labels must lie in [0, classes).
template <typename T> LossResult<T> softmax_cross_entropy(const Tensor<T> &logits, std::span<const int> labels);

/// Zero-mean He samples: normal with std sqrt(2/fan_in), or uniform on
/// +-sqrt(6/fan_in) (same variance).
class HeInit {
public:
  HeInit(std::size_t fan_in, InitScheme scheme = InitScheme::HeNormal);

  double stddev() const noexcept { return stddev_; }
  double sample(Rng &rng);

private:
  InitScheme scheme_;
  double stddev_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

template <typename T> void he_fill(Tensor<T> &t, std::size_t fan_in, Rng &rng, InitScheme scheme = InitScheme::HeNormal);

} // namespace poolnet
