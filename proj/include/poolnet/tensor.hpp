#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace poolnet {

/// Raised for any extent mismatch or invalid shape.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Batch-channel-row-col extents. Layout is always row-major NCHW.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  std::size_t sample() const noexcept { return c * h * w; }
  bool valid() const noexcept;

  bool operator==(const Shape &) const = default;
  std::string str() const;
};

/// Checked product of the extents; throws ShapeError on overflow or zero extent.
std::size_t checked_size(const Shape &s);

/// Dense 4-D array of T. Default-constructed tensors are empty and hold no data;
/// every other constructor requires a valid (all extents >= 1) shape.
template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T value = T{});
  Tensor(Shape shape, std::vector<T> data);

  const Shape &shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T *raw() noexcept { return data_.data(); }
  const T *raw() const noexcept { return data_.data(); }

  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_.at(index(n, c, h, w)); }
  const T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_.at(index(n, c, h, w));
  }

  /// Contiguous view of sample n.
  std::span<T> sample(std::size_t n) { return std::span<T>(data_).subspan(n * shape_.sample(), shape_.sample()); }
  std::span<const T> sample(std::size_t n) const {
    return std::span<const T>(data_).subspan(n * shape_.sample(), shape_.sample());
  }

  /// Same data, new extents. Element count must match.
  Tensor reshaped(Shape shape) const;

  template <typename U> Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void fill(T value);

  bool operator==(const Tensor &) const = default;

private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

template <typename T> Tensor<T> tensor_full(Shape shape, T value) { return Tensor<T>(shape, value); }

/// Elementwise max(x, 0).
template <typename T> Tensor<T> relu(const Tensor<T> &x);

/// Position of one non-overlapping k x k block.
struct WindowIndex {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t block_row = 0;
  std::size_t block_col = 0;
  std::size_t origin = 0; ///< flat index of the block's top-left element
  std::size_t row_stride = 0;
  std::size_t k = 0;

  /// Flat tensor index of element (i, j) inside the block.
  std::size_t at(std::size_t i, std::size_t j) const noexcept { return origin + i * row_stride + j; }
};

template <typename T> struct Window {
  WindowIndex where;
  std::vector<T> values; ///< k*k values, row-major
};

/// Throws ShapeError unless h and w are both divisible by k (k >= 1).
void require_divisible(const Shape &s, std::size_t k);

/// Visits every non-overlapping k x k block; order is sample, channel, then
/// row-major over blocks.
void for_each_window(const Shape &s, std::size_t k, const std::function<void(const WindowIndex &)> &fn);

/// Materialized form of for_each_window.
template <typename T> std::vector<Window<T>> window_iter(const Tensor<T> &x, std::size_t k);

template <typename T> struct ArgMax {
  std::size_t index = 0;
  T value{};
};

/// First row-major position attaining the maximum. Throws on empty input.
template <typename T> ArgMax<T> argmax_window(std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<unsigned char>;

} // namespace poolnet
