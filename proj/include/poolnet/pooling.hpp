#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "poolnet/tensor.hpp"

namespace poolnet {

enum class PoolKind { Max, Avg };

/// Non-overlapping pooling: stride always equals the window.
struct PoolingOp {
  PoolKind kind = PoolKind::Max;
  std::size_t window = 2;

  static PoolingOp max(std::size_t k) { return {PoolKind::Max, k}; }
  static PoolingOp avg(std::size_t k) { return {PoolKind::Avg, k}; }

  /// "MP3" / "AP2".
  std::string str() const;
  bool operator==(const PoolingOp &) const = default;
};

/// Ordered composition; ops[0] is applied first (nearest the input). The
/// written form "(a x a)XP o (b x b)YP" reads leftmost-first, so it maps to
/// {XP(a), YP(b)}.
class PoolingStack {
public:
  PoolingStack() = default;
  PoolingStack(std::initializer_list<PoolingOp> ops) : ops_(ops) {}
  explicit PoolingStack(std::vector<PoolingOp> ops) : ops_(std::move(ops)) {}

  /// Parses the CLI grammar: comma-separated AP<k>/MP<k> tokens, leftmost first.
  static PoolingStack parse(std::string_view text);

  const std::vector<PoolingOp> &ops() const noexcept { return ops_; }
  std::size_t size() const noexcept { return ops_.size(); }
  bool empty() const noexcept { return ops_.empty(); }

  /// Product of the windows.
  std::size_t total_factor() const noexcept;

  /// Input-side side length covered by one output of each prefix of the
  /// stack: {k1, k1*k2, ..., total}.
  std::vector<std::size_t> cell_sides() const;

  /// Route count per output unit on tie-free input: product of k^2 over the
  /// Avg ops.
  std::size_t expected_routes() const noexcept;

  std::string str() const;
  bool operator==(const PoolingStack &) const = default;

private:
  std::vector<PoolingOp> ops_;
};

/// Forward bookkeeping needed by the backward pass. argmax holds, for every
/// output element of a Max op, the flat input index of its selected element.
struct PoolMemo {
  PoolingOp op;
  Shape input;
  std::vector<std::size_t> argmax;
};

template <typename T> struct PoolResult {
  Tensor<T> y;
  PoolMemo memo;
};

template <typename T> PoolResult<T> pool_forward(const PoolingOp &op, const Tensor<T> &x);

/// Max routes each output gradient to its argmax; Avg spreads it with weight 1/k^2.
template <typename T> Tensor<T> pool_backward(const PoolingOp &op, const PoolMemo &memo, const Tensor<T> &grad_out);

template <typename T> struct StackResult {
  Tensor<T> y;
  std::vector<PoolMemo> memos;
};

template <typename T> StackResult<T> stack_forward(const PoolingStack &stack, const Tensor<T> &x);

template <typename T>
Tensor<T> stack_backward(const PoolingStack &stack, const std::vector<PoolMemo> &memos, const Tensor<T> &grad_out);

/// Positions of a stack input that carry a nonzero gradient when every stack
/// output receives gradient 1.
struct RouteMask {
  PoolingStack stack;
  Tensor<unsigned char> active;

  std::size_t count() const;
};

template <typename T> RouteMask route_mask(const PoolingStack &stack, const Tensor<T> &x);

enum class Locality { Localized, Delocalized };

std::string_view to_string(Locality l);

/// Route summary for one output window (one sample, one channel).
struct RouteReport {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t block_row = 0;
  std::size_t block_col = 0;
  std::size_t window = 0;
  std::size_t count = 0;
  std::size_t bbox_rows = 0; ///< geometric extent of the active routes
  std::size_t bbox_cols = 0;
  /// Side of the smallest aligned cell that contains every active route.
  std::size_t enclosing_cell = 0;
  /// Localized iff enclosing_cell < window.
  Locality locality = Locality::Delocalized;
};

/// Cells are the stack's intermediate receptive fields (cell_sides()).
std::vector<RouteReport> route_report(const RouteMask &mask);

/// Without a stack, every aligned tiling whose side divides `window` is a
/// candidate cell.
std::vector<RouteReport> route_report(const Tensor<unsigned char> &mask, std::size_t window);

/// All 2^n (or |kinds|^n) stacks of n (2x2) operators. Slot 0 varies slowest;
/// kinds are taken in the given order.
std::vector<PoolingStack> enumerate_stacks(std::size_t n,
                                           const std::vector<PoolKind> &kinds = {PoolKind::Max, PoolKind::Avg});

} // namespace poolnet
