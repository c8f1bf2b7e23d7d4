#include "poolnet/pooling.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace poolnet {

std::string PoolingOp::str() const { return (kind == PoolKind::Max ? "MP" : "AP") + std::to_string(window); }

PoolingStack PoolingStack::parse(std::string_view text) {
  std::vector<PoolingOp> ops;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string token;
    for (char ch : text.substr(pos, comma - pos))
      if (!std::isspace(static_cast<unsigned char>(ch)))
        token.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (token.size() < 3 || (token.rfind("AP", 0) != 0 && token.rfind("MP", 0) != 0))
      throw std::invalid_argument("bad pooling token '" + token + "' (expected AP<k> or MP<k>)");
    const std::string digits = token.substr(2);
    if (!std::all_of(digits.begin(), digits.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
      throw std::invalid_argument("bad pooling window in '" + token + "'");
    const std::size_t k = std::stoul(digits);
    if (k < 2)
      throw std::invalid_argument("pooling window must be >= 2 in '" + token + "'");
    ops.push_back({token[0] == 'M' ? PoolKind::Max : PoolKind::Avg, k});
    pos = comma + 1;
  }
  return PoolingStack(std::move(ops));
}

std::size_t PoolingStack::total_factor() const noexcept {
  std::size_t f = 1;
  for (const auto &op : ops_)
    f *= op.window;
  return f;
}

std::vector<std::size_t> PoolingStack::cell_sides() const {
  std::vector<std::size_t> sides;
  std::size_t f = 1;
  for (const auto &op : ops_) {
    f *= op.window;
    sides.push_back(f);
  }
  return sides;
}

std::size_t PoolingStack::expected_routes() const noexcept {
  std::size_t r = 1;
  for (const auto &op : ops_)
    if (op.kind == PoolKind::Avg)
      r *= op.window * op.window;
  return r;
}

std::string PoolingStack::str() const {
  std::string s;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (i)
      s += ',';
    s += ops_[i].str();
  }
  return s;
}

template <typename T> PoolResult<T> pool_forward(const PoolingOp &op, const Tensor<T> &x) {
  const Shape in = x.shape();
  const std::size_t k = op.window;
  require_divisible(in, k);
  PoolResult<T> r;
  r.memo.op = op;
  r.memo.input = in;
  r.y = Tensor<T>(Shape{in.n, in.c, in.h / k, in.w / k});
  if (op.kind == PoolKind::Max)
    r.memo.argmax.resize(r.y.size());
  const T inv_area = T(1) / static_cast<T>(k * k);
  std::size_t out = 0;
  for_each_window(in, k, [&](const WindowIndex &wi) {
    if (op.kind == PoolKind::Max) {
      std::size_t best = wi.at(0, 0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t idx = wi.at(i, j);
          if (x[idx] > x[best])
            best = idx;
        }
      r.y[out] = x[best];
      r.memo.argmax[out] = best;
    } else {
      T s = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          s += x[wi.at(i, j)];
      r.y[out] = s * inv_area;
    }
    ++out;
  });
  return r;
}

template <typename T> Tensor<T> pool_backward(const PoolingOp &op, const PoolMemo &memo, const Tensor<T> &grad_out) {
  if (!(op == memo.op))
    throw std::invalid_argument("pool_backward: memo belongs to " + memo.op.str() + ", not " + op.str());
  const Shape in = memo.input;
  const std::size_t k = op.window;
  const Shape expect{in.n, in.c, in.h / k, in.w / k};
  if (grad_out.shape() != expect)
    throw ShapeError("pool_backward: stale memo, grad_out " + grad_out.shape().str() + " != " + expect.str());
  Tensor<T> g(in, T(0));
  if (op.kind == PoolKind::Max) {
    if (memo.argmax.size() != grad_out.size())
      throw ShapeError("pool_backward: argmax memo size mismatch");
    for (std::size_t o = 0; o < grad_out.size(); ++o)
      g[memo.argmax[o]] += grad_out[o];
    return g;
  }
  const T inv_area = T(1) / static_cast<T>(k * k);
  std::size_t out = 0;
  for_each_window(in, k, [&](const WindowIndex &wi) {
    const T v = grad_out[out++] * inv_area;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        g[wi.at(i, j)] = v;
  });
  return g;
}

template <typename T> StackResult<T> stack_forward(const PoolingStack &stack, const Tensor<T> &x) {
  StackResult<T> r;
  r.y = x;
  for (const auto &op : stack.ops()) {
    auto step = pool_forward(op, r.y);
    r.y = std::move(step.y);
    r.memos.push_back(std::move(step.memo));
  }
  return r;
}

template <typename T>
Tensor<T> stack_backward(const PoolingStack &stack, const std::vector<PoolMemo> &memos, const Tensor<T> &grad_out) {
  if (memos.size() != stack.size())
    throw std::invalid_argument("stack_backward: " + std::to_string(memos.size()) + " memos for " +
                                std::to_string(stack.size()) + " ops");
  Tensor<T> g = grad_out;
  for (std::size_t i = stack.size(); i-- > 0;)
    g = pool_backward(stack.ops()[i], memos[i], g);
  return g;
}

std::size_t RouteMask::count() const {
  return static_cast<std::size_t>(std::count(active.data().begin(), active.data().end(), 1));
}

template <typename T> RouteMask route_mask(const PoolingStack &stack, const Tensor<T> &x) {
  auto fwd = stack_forward(stack, x);
  const Tensor<T> ones(fwd.y.shape(), T(1));
  const Tensor<T> g = stack_backward(stack, fwd.memos, ones);
  RouteMask m{stack, Tensor<unsigned char>(x.shape(), 0)};
  for (std::size_t i = 0; i < g.size(); ++i)
    m.active[i] = g[i] != T(0) ? 1 : 0;
  return m;
}

std::string_view to_string(Locality l) { return l == Locality::Localized ? "localized" : "delocalized"; }

namespace {

std::vector<RouteReport> report_windows(const Tensor<unsigned char> &mask, std::size_t window,
                                        const std::vector<std::size_t> &cells) {
  std::vector<RouteReport> out;
  for_each_window(mask.shape(), window, [&](const WindowIndex &wi) {
    RouteReport r;
    r.n = wi.n;
    r.c = wi.c;
    r.block_row = wi.block_row;
    r.block_col = wi.block_col;
    r.window = window;
    std::size_t rmin = window, rmax = 0, cmin = window, cmax = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pts;
    for (std::size_t i = 0; i < window; ++i)
      for (std::size_t j = 0; j < window; ++j)
        if (mask[wi.at(i, j)]) {
          pts.emplace_back(i, j);
          rmin = std::min(rmin, i);
          rmax = std::max(rmax, i);
          cmin = std::min(cmin, j);
          cmax = std::max(cmax, j);
        }
    r.count = pts.size();
    if (!pts.empty()) {
      r.bbox_rows = rmax - rmin + 1;
      r.bbox_cols = cmax - cmin + 1;
    }
    r.enclosing_cell = window;
    for (std::size_t side : cells) {
      if (side >= window || window % side != 0)
        continue;
      const bool fits = std::all_of(pts.begin(), pts.end(), [&](const auto &p) {
        return p.first / side == pts.front().first / side && p.second / side == pts.front().second / side;
      });
      if (fits && !pts.empty()) {
        r.enclosing_cell = side;
        break;
      }
    }
    r.locality = r.enclosing_cell < window ? Locality::Localized : Locality::Delocalized;
    out.push_back(r);
  });
  return out;
}

} // namespace

std::vector<RouteReport> route_report(const RouteMask &mask) {
  return report_windows(mask.active, mask.stack.total_factor(), mask.stack.cell_sides());
}

std::vector<RouteReport> route_report(const Tensor<unsigned char> &mask, std::size_t window) {
  std::vector<std::size_t> divisors;
  for (std::size_t d = 1; d <= window; ++d)
    if (window % d == 0)
      divisors.push_back(d);
  return report_windows(mask, window, divisors);
}

std::vector<PoolingStack> enumerate_stacks(std::size_t n, const std::vector<PoolKind> &kinds) {
  if (n == 0)
    throw std::invalid_argument("enumerate_stacks: n must be >= 1");
  if (kinds.empty())
    throw std::invalid_argument("enumerate_stacks: no pooling kinds");
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i)
    total *= kinds.size();
  std::vector<PoolingStack> out;
  out.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<PoolingOp> ops(n);
    std::size_t rest = code;
    for (std::size_t slot = n; slot-- > 0;) {
      ops[slot] = {kinds[rest % kinds.size()], 2};
      rest /= kinds.size();
    }
    out.emplace_back(std::move(ops));
  }
  return out;
}

#define POOLNET_INSTANTIATE_POOLING(T)                                                                                 \
  template PoolResult<T> pool_forward(const PoolingOp &, const Tensor<T> &);                                           \
  template Tensor<T> pool_backward(const PoolingOp &, const PoolMemo &, const Tensor<T> &);                            \
  template StackResult<T> stack_forward(const PoolingStack &, const Tensor<T> &);                                      \
  template Tensor<T> stack_backward(const PoolingStack &, const std::vector<PoolMemo> &, const Tensor<T> &);           \
  template RouteMask route_mask(const PoolingStack &, const Tensor<T> &);

POOLNET_INSTANTIATE_POOLING(float)
POOLNET_INSTANTIATE_POOLING(double)

} // namespace poolnet
