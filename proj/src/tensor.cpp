#include "poolnet/tensor.hpp"

#include <algorithm>
#include <limits>

namespace poolnet {

bool Shape::valid() const noexcept { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

std::size_t checked_size(const Shape &s) {
  if (!s.valid())
    throw ShapeError("shape " + s.str() + " has a zero extent");
  std::size_t total = 1;
  for (std::size_t e : {s.n, s.c, s.h, s.w}) {
    if (total > std::numeric_limits<std::size_t>::max() / e)
      throw ShapeError("shape " + s.str() + " overflows the element count");
    total *= e;
  }
  return total;
}

template <typename T> Tensor<T>::Tensor(Shape shape, T value) : shape_(shape), data_(checked_size(shape), value) {}

template <typename T> Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (checked_size(shape) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
}

template <typename T> Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (checked_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  return Tensor(shape, data_);
}

template <typename T> void Tensor<T>::fill(T value) { std::fill(data_.begin(), data_.end(), value); }

template <typename T> Tensor<T> relu(const Tensor<T> &x) {
  Tensor<T> y = x;
  for (T &v : y.data())
    v = v > T(0) ? v : T(0);
  return y;
}

void require_divisible(const Shape &s, std::size_t k) {
  if (k == 0)
    throw ShapeError("window size must be positive");
  if (s.h % k != 0 || s.w % k != 0)
    throw ShapeError("extent " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is not divisible by window " +
                     std::to_string(k));
}

void for_each_window(const Shape &s, std::size_t k, const std::function<void(const WindowIndex &)> &fn) {
  require_divisible(s, k);
  const std::size_t rows = s.h / k;
  const std::size_t cols = s.w / k;
  WindowIndex wi;
  wi.k = k;
  wi.row_stride = s.w;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t plane = (n * s.c + c) * s.h * s.w;
      for (std::size_t br = 0; br < rows; ++br) {
        for (std::size_t bc = 0; bc < cols; ++bc) {
          wi.n = n;
          wi.c = c;
          wi.block_row = br;
          wi.block_col = bc;
          wi.origin = plane + br * k * s.w + bc * k;
          fn(wi);
        }
      }
    }
  }
}

template <typename T> std::vector<Window<T>> window_iter(const Tensor<T> &x, std::size_t k) {
  std::vector<Window<T>> out;
  for_each_window(x.shape(), k, [&](const WindowIndex &wi) {
    Window<T> win{wi, {}};
    win.values.reserve(k * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        win.values.push_back(x[wi.at(i, j)]);
    out.push_back(std::move(win));
  });
  return out;
}

template <typename T> ArgMax<T> argmax_window(std::span<const T> values) {
  if (values.empty())
    throw std::invalid_argument("argmax_window: empty block");
  ArgMax<T> best{0, values[0]};
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > best.value) {
      best.index = i;
      best.value = values[i];
    }
  }
  return best;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<unsigned char>;

template Tensor<float> relu(const Tensor<float> &);
template Tensor<double> relu(const Tensor<double> &);
template std::vector<Window<float>> window_iter(const Tensor<float> &, std::size_t);
template std::vector<Window<double>> window_iter(const Tensor<double> &, std::size_t);
template ArgMax<float> argmax_window(std::span<const float>);
template ArgMax<double> argmax_window(std::span<const double>);

} // namespace poolnet
