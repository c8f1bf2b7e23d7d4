#pragma once

// Test-side reference implementations. Deliberately naive: plain loops over
// nested vectors, no shared code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "poolnet/tensor.hpp"

namespace oracle {

using poolnet::Shape;
using poolnet::Tensor;

/// Direct 6-loop cross-correlation with zero padding.
inline Tensor<double> conv(const Tensor<double> &x, const Tensor<double> &w, const Tensor<double> &b,
                           std::size_t pad) {
  const Shape in = x.shape();
  const std::size_t outc = w.shape().n, k = w.shape().h;
  const std::size_t oh = in.h + 2 * pad - k + 1, ow = in.w + 2 * pad - k + 1;
  Tensor<double> y(Shape{in.n, outc, oh, ow});
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t o = 0; o < outc; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double s = b[o];
          for (std::size_t i = 0; i < in.c; ++i)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long rr = static_cast<long>(r + u) - static_cast<long>(pad);
                const long cc = static_cast<long>(c + v) - static_cast<long>(pad);
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(in.h) || cc >= static_cast<long>(in.w))
                  continue;
                s += w.at(o, i, u, v) * x.at(n, i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
              }
          y.at(n, o, r, c) = s;
        }
  return y;
}

/// y[n][o] = b[o] + sum_i W[o][i] x[n][i], W stored (1,1,out,in).
inline Tensor<double> fc(const Tensor<double> &x, const Tensor<double> &w, const Tensor<double> &b) {
  const std::size_t n = x.shape().n, in = x.shape().sample(), out = w.shape().h;
  Tensor<double> y(Shape{n, out, 1, 1});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i)
        acc += w[o * in + i] * x[s * in + i];
      y[s * out + o] = acc;
    }
  return y;
}

/// Block max or mean with window k.
template <typename T> Tensor<T> pool(const Tensor<T> &x, std::size_t k, bool max) {
  const Shape s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, s.h / k, s.w / k});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t r = 0; r < s.h / k; ++r)
        for (std::size_t q = 0; q < s.w / k; ++q) {
          T best = x.at(n, c, r * k, q * k);
          long double sum = 0;
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const T val = x.at(n, c, r * k + u, q * k + v);
              best = std::max(best, val);
              sum += val;
            }
          y.at(n, c, r, q) = max ? best : static_cast<T>(sum / static_cast<long double>(k * k));
        }
  return y;
}

/// Central differences of `loss` with respect to every element of `x`.
inline std::vector<double> finite_difference(Tensor<double> &x, const std::function<double()> &loss, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Depth-3 binary tree, nodes numbered level by level: level 1 holds nodes
/// 0..1, level 2 holds 2..5, level 3 holds 6..13. Children of node a at one
/// level are 2a and 2a+1 in the next level's local numbering.
struct Tree3 {
  double v[14];

  double at(int level, int local) const {
    static constexpr int offset[] = {0, 0, 2, 6};
    return v[offset[level] + local];
  }

  double greedy() const {
    double product = 1.0;
    int node = -1;
    for (int level = 1; level <= 3; ++level) {
      const int left = node < 0 ? 0 : 2 * node;
      const int pickr = at(level, left + 1) > at(level, left);
      node = left + pickr;
      product *= at(level, node);
    }
    return product;
  }

  double global() const {
    double best = 0.0;
    for (int leaf = 0; leaf < 8; ++leaf)
      best = std::max(best, at(1, leaf >> 2) * at(2, leaf >> 1) * at(3, leaf));
    return best;
  }
};

/// Exact probability, over all 3^14 assignments of `levels` to the 14 nodes,
/// that the best path beats the greedy one.
inline double exhaustive_tree_disagreement(const double (&levels)[3]) {
  std::uint64_t bad = 0, total = 0;
  int digit[14] = {};
  Tree3 t{};
  for (;;) {
    for (int i = 0; i < 14; ++i)
      t.v[i] = levels[digit[i]];
    bad += t.global() > t.greedy();
    ++total;
    int i = 0;
    while (i < 14 && ++digit[i] == 3)
      digit[i++] = 0;
    if (i == 14)
      break;
  }
  return static_cast<double>(bad) / static_cast<double>(total);
}

inline Tensor<double> gaussian(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<double> t(s);
  for (auto &v : t.data())
    v = normal(rng);
  return t;
}

} // namespace oracle
