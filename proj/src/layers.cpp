#include "poolnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gemm.hpp"

namespace poolnet {

namespace {

// Unfold one sample (C, H, W) into (C*K*K, Ho*Wo) columns.
template <typename T>
void im2col(const T *x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            std::size_t ho, std::size_t wo, T *col) {
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    const T *plane = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T *row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - ipad;
          T *dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T *src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - ipad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into (C, H, W).
template <typename T>
void col2im(const T *col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            std::size_t ho, std::size_t wo, T *x) {
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    T *plane = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T *row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - ipad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
            continue;
          T *dst = plane + static_cast<std::size_t>(iy) * w;
          const T *src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - ipad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w))
              dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

int as_int(std::size_t v) {
  if (v > static_cast<std::size_t>(std::numeric_limits<int>::max()))
    throw ShapeError("dimension too large for BLAS: " + std::to_string(v));
  return static_cast<int>(v);
}

} // namespace

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
ConvLayer<T>::ConvLayer(std::size_t in_depth, std::size_t out_depth, std::size_t kernel, std::size_t pad)
    : filters(Shape{out_depth, in_depth, kernel, kernel}), bias(Shape{1, 1, 1, out_depth}), padding(pad) {}

template <typename T> Shape ConvLayer<T>::output_shape(const Shape &in) const {
  if (in.c != in_depth())
    throw ShapeError("conv expects " + std::to_string(in_depth()) + " input channels, got " + std::to_string(in.c));
  const std::size_t k = kernel();
  if (in.h + 2 * padding < k || in.w + 2 * padding < k)
    throw ShapeError("conv input " + in.str() + " smaller than kernel " + std::to_string(k));
  return Shape{in.n, out_depth(), in.h + 2 * padding - k + 1, in.w + 2 * padding - k + 1};
}

template <typename T> Tensor<T> conv_forward(const ConvLayer<T> &layer, const Tensor<T> &x) {
  const Shape in = x.shape();
  const Shape out = layer.output_shape(in);
  const std::size_t k = layer.kernel();
  const std::size_t ckk = layer.fan_in();
  const std::size_t hw = out.h * out.w;
  Tensor<T> y(out);
  std::vector<T> col(ckk * hw);
  for (std::size_t n = 0; n < in.n; ++n) {
    im2col(x.raw() + n * in.sample(), in.c, in.h, in.w, k, layer.padding, out.h, out.w, col.data());
    T *dst = y.raw() + n * out.sample();
    for (std::size_t d = 0; d < out.c; ++d)
      std::fill(dst + d * hw, dst + (d + 1) * hw, layer.bias[d]);
    detail::gemm(false, false, as_int(out.c), as_int(hw), as_int(ckk), T(1), layer.filters.raw(), as_int(ckk),
                 col.data(), as_int(hw), T(1), dst, as_int(hw));
  }
  return y;
}

template <typename T>
GradientBundle<T> conv_backward(const ConvLayer<T> &layer, const Tensor<T> &x, const Tensor<T> &grad_out) {
  const Shape in = x.shape();
  const Shape out = layer.output_shape(in);
  if (grad_out.shape() != out)
    throw ShapeError("conv_backward: grad_out " + grad_out.shape().str() + " != output " + out.str());
  const std::size_t k = layer.kernel();
  const std::size_t ckk = layer.fan_in();
  const std::size_t hw = out.h * out.w;

  GradientBundle<T> g;
  g.params.emplace_back(layer.filters.shape(), T(0));
  g.params.emplace_back(layer.bias.shape(), T(0));
  g.input = Tensor<T>(in, T(0));
  Tensor<T> &dw = g.params[0];
  Tensor<T> &db = g.params[1];

  std::vector<T> col(ckk * hw);
  std::vector<T> dcol(ckk * hw);
  for (std::size_t n = 0; n < in.n; ++n) {
    const T *go = grad_out.raw() + n * out.sample();
    im2col(x.raw() + n * in.sample(), in.c, in.h, in.w, k, layer.padding, out.h, out.w, col.data());
    detail::gemm(false, true, as_int(out.c), as_int(ckk), as_int(hw), T(1), go, as_int(hw), col.data(), as_int(hw),
                 T(1), dw.raw(), as_int(ckk));
    for (std::size_t d = 0; d < out.c; ++d) {
      T s = 0;
      for (std::size_t i = 0; i < hw; ++i)
        s += go[d * hw + i];
      db[d] += s;
    }
    detail::gemm(true, false, as_int(ckk), as_int(hw), as_int(out.c), T(1), layer.filters.raw(), as_int(ckk), go,
                 as_int(hw), T(0), dcol.data(), as_int(hw));
    col2im(dcol.data(), in.c, in.h, in.w, k, layer.padding, out.h, out.w, g.input.raw() + n * in.sample());
  }
  return g;
}

// ---------------------------------------------------------------------------
// Fully connected

template <typename T>
FcLayer<T>::FcLayer(std::size_t in_units, std::size_t out_units)
    : weights(Shape{1, 1, out_units, in_units}), bias(Shape{1, 1, 1, out_units}) {}

template <typename T> Tensor<T> fc_forward(const FcLayer<T> &layer, const Tensor<T> &x) {
  const std::size_t batch = x.shape().n;
  const std::size_t in = x.shape().sample();
  if (in != layer.in_units())
    throw ShapeError("fc expects " + std::to_string(layer.in_units()) + " inputs, got " + std::to_string(in));
  const std::size_t out = layer.out_units();
  Tensor<T> y(Shape{batch, out, 1, 1});
  for (std::size_t n = 0; n < batch; ++n)
    std::copy(layer.bias.raw(), layer.bias.raw() + out, y.raw() + n * out);
  detail::gemm(false, true, as_int(batch), as_int(out), as_int(in), T(1), x.raw(), as_int(in), layer.weights.raw(),
               as_int(in), T(1), y.raw(), as_int(out));
  return y;
}

template <typename T>
GradientBundle<T> fc_backward(const FcLayer<T> &layer, const Tensor<T> &x, const Tensor<T> &grad_out) {
  const std::size_t batch = x.shape().n;
  const std::size_t in = x.shape().sample();
  const std::size_t out = layer.out_units();
  if (in != layer.in_units())
    throw ShapeError("fc_backward: input width mismatch");
  if (grad_out.shape() != Shape{batch, out, 1, 1})
    throw ShapeError("fc_backward: grad_out " + grad_out.shape().str() + " does not match output");
  GradientBundle<T> g;
  g.params.emplace_back(layer.weights.shape(), T(0));
  g.params.emplace_back(layer.bias.shape(), T(0));
  g.input = Tensor<T>(x.shape(), T(0));
  // dW (out x in) = G^T (out x batch) * X (batch x in)
  detail::gemm(true, false, as_int(out), as_int(in), as_int(batch), T(1), grad_out.raw(), as_int(out), x.raw(),
               as_int(in), T(0), g.params[0].raw(), as_int(in));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o)
      g.params[1][o] += grad_out[n * out + o];
  // dX (batch x in) = G (batch x out) * W (out x in)
  detail::gemm(false, false, as_int(batch), as_int(in), as_int(out), T(1), grad_out.raw(), as_int(out),
               layer.weights.raw(), as_int(in), T(0), g.input.raw(), as_int(in));
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels)
    : gamma(Shape{1, 1, 1, channels}, T(1)), beta(Shape{1, 1, 1, channels}, T(0)), running_mean(channels, T(0)),
      running_var(channels, T(1)) {}

template <typename T> BatchNormResult<T> batchnorm_forward(BatchNormLayer<T> &layer, const Tensor<T> &x, Mode mode) {
  const Shape s = x.shape();
  if (s.c != layer.channels())
    throw ShapeError("batchnorm expects " + std::to_string(layer.channels()) + " channels, got " + std::to_string(s.c));
  const std::size_t plane = s.plane();
  const std::size_t m = s.n * plane;
  if (mode == Mode::Train && m < 2)
    throw std::invalid_argument("batchnorm: train mode needs at least two values per channel");

  BatchNormResult<T> r;
  r.cache.mode = mode;
  r.cache.x_hat = Tensor<T>(s);
  r.cache.inv_std.assign(s.c, T(0));
  r.y = Tensor<T>(s);

  for (std::size_t c = 0; c < s.c; ++c) {
    T mean, var;
    if (mode == Mode::Train) {
      double acc = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T *p = x.raw() + (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          acc += p[i];
      }
      mean = static_cast<T>(acc / static_cast<double>(m));
      double sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T *p = x.raw() + (n * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          sq += d * d;
        }
      }
      var = static_cast<T>(sq / static_cast<double>(m));
      const T unbiased = static_cast<T>(sq / static_cast<double>(m - 1));
      const T mom = static_cast<T>(layer.momentum);
      layer.running_mean[c] = (T(1) - mom) * layer.running_mean[c] + mom * mean;
      layer.running_var[c] = (T(1) - mom) * layer.running_var[c] + mom * unbiased;
    } else {
      mean = layer.running_mean[c];
      var = layer.running_var[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + layer.epsilon));
    r.cache.inv_std[c] = inv;
    const T g = layer.gamma[c];
    const T b = layer.beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x[off + i] - mean) * inv;
        r.cache.x_hat[off + i] = xh;
        r.y[off + i] = g * xh + b;
      }
    }
  }
  return r;
}

template <typename T>
GradientBundle<T> batchnorm_backward(const BatchNormLayer<T> &layer, const BatchNormCache<T> &cache,
                                     const Tensor<T> &grad_out) {
  const Shape s = cache.x_hat.shape();
  if (grad_out.shape() != s)
    throw ShapeError("batchnorm_backward: grad_out " + grad_out.shape().str() + " != " + s.str());
  const std::size_t plane = s.plane();
  const double m = static_cast<double>(s.n * plane);
  GradientBundle<T> g;
  g.params.emplace_back(layer.gamma.shape(), T(0));
  g.params.emplace_back(layer.beta.shape(), T(0));
  g.input = Tensor<T>(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += static_cast<double>(grad_out[off + i]) * cache.x_hat[off + i];
      }
    }
    g.params[0][c] = static_cast<T>(sum_gx);
    g.params[1][c] = static_cast<T>(sum_g);
    const double scale = static_cast<double>(layer.gamma[c]) * cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (cache.mode == Mode::Train) {
          const double v = grad_out[off + i] - sum_g / m - cache.x_hat[off + i] * sum_gx / m;
          g.input[off + i] = static_cast<T>(scale * v);
        } else {
          g.input[off + i] = static_cast<T>(scale * grad_out[off + i]);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy

template <typename T> Tensor<T> softmax(const Tensor<T> &logits) {
  const std::size_t batch = logits.shape().n;
  const std::size_t k = logits.shape().sample();
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const T *z = logits.raw() + n * k;
    T *q = p.raw() + n * k;
    const T zmax = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
      q[i] = static_cast<T>(std::exp(static_cast<double>(z[i] - zmax)));
      sum += q[i];
    }
    for (std::size_t i = 0; i < k; ++i)
      q[i] = static_cast<T>(q[i] / sum);
  }
  return p;
}

template <typename T> LossResult<T> softmax_cross_entropy(const Tensor<T> &logits, std::span<const int> labels) {
  const std::size_t batch = logits.shape().n;
  const std::size_t k = logits.shape().sample();
  if (labels.size() != batch)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                std::to_string(batch));
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  double total = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw std::out_of_range("label " + std::to_string(label) + " outside [0, " + std::to_string(k - 1) + "]");
    const T *z = logits.raw() + n * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t i = 0; i < k; ++i)
      sum += std::exp(static_cast<double>(z[i]) - zmax);
    const double log_sum = std::log(sum) + zmax;
    total += log_sum - z[label];
    T *g = r.grad.raw() + n * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double p = std::exp(static_cast<double>(z[i]) - log_sum);
      g[i] = static_cast<T>((p - (static_cast<std::size_t>(label) == i ? 1.0 : 0.0)) / static_cast<double>(batch));
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(batch));
  return r;
}

// ---------------------------------------------------------------------------
// He initialization

HeInit::HeInit(std::size_t fan_in, InitScheme scheme)
    : scheme_(scheme), stddev_(0), normal_(0.0, 1.0), uniform_(-1.0, 1.0) {
  if (fan_in == 0)
    throw std::invalid_argument("He init needs fan_in >= 1");
  stddev_ = std::sqrt(2.0 / static_cast<double>(fan_in));
}

double HeInit::sample(Rng &rng) {
  if (scheme_ == InitScheme::HeNormal)
    return stddev_ * normal_(rng);
  return std::sqrt(3.0) * stddev_ * uniform_(rng);
}

template <typename T> void he_fill(Tensor<T> &t, std::size_t fan_in, Rng &rng, InitScheme scheme) {
  HeInit init(fan_in, scheme);
  for (T &v : t.data())
    v = static_cast<T>(init.sample(rng));
}

#define POOLNET_INSTANTIATE_LAYERS(T)                                                                                  \
  template struct ConvLayer<T>;                                                                                        \
  template Tensor<T> conv_forward(const ConvLayer<T> &, const Tensor<T> &);                                            \
  template GradientBundle<T> conv_backward(const ConvLayer<T> &, const Tensor<T> &, const Tensor<T> &);                \
  template struct FcLayer<T>;                                                                                          \
  template Tensor<T> fc_forward(const FcLayer<T> &, const Tensor<T> &);                                                \
  template GradientBundle<T> fc_backward(const FcLayer<T> &, const Tensor<T> &, const Tensor<T> &);                    \
  template struct BatchNormLayer<T>;                                                                                   \
  template BatchNormResult<T> batchnorm_forward(BatchNormLayer<T> &, const Tensor<T> &, Mode);                         \
  template GradientBundle<T> batchnorm_backward(const BatchNormLayer<T> &, const BatchNormCache<T> &,                  \
                                                const Tensor<T> &);                                                    \
  template Tensor<T> softmax(const Tensor<T> &);                                                                       \
  template LossResult<T> softmax_cross_entropy(const Tensor<T> &, std::span<const int>);                               \
  template void he_fill(Tensor<T> &, std::size_t, Rng &, InitScheme);

POOLNET_INSTANTIATE_LAYERS(float)
POOLNET_INSTANTIATE_LAYERS(double)

} // namespace poolnet
