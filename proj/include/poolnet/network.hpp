#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "poolnet/layers.hpp"
#include "poolnet/pooling.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet {

/// `count` consecutive KxK conv layers of `depth` output channels, each
/// followed by optional batch norm and a ReLU. Table notation "Conv.2-64" is
/// ConvBlock{2, 64}.
struct ConvBlock {
  std::size_t count = 1;
  std::size_t depth = 64;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  bool batchnorm = true;
  bool operator==(const ConvBlock &) const = default;
};

struct PoolItem {
  PoolingOp op;
  bool operator==(const PoolItem &) const = default;
};

struct FlattenItem {
  bool operator==(const FlattenItem &) const = default;
};

struct FcItem {
  std::size_t units = 10;
  bool operator==(const FcItem &) const = default;
};

enum class Activation { Relu, Linear };

struct ActivationItem {
  Activation fn = Activation::Relu;
  bool operator==(const ActivationItem &) const = default;
};

struct SoftmaxOutput {
  std::size_t classes = 10;
  bool operator==(const SoftmaxOutput &) const = default;
};

using ArchItem = std::variant<ConvBlock, PoolItem, FlattenItem, FcItem, ActivationItem, SoftmaxOutput>;

struct ArchSpec {
  std::string name;
  std::size_t in_channels = 3;
  std::size_t in_height = 32;
  std::size_t in_width = 32;
  std::vector<ArchItem> items;

  bool operator==(const ArchSpec &) const = default;
};

/// Shape-trace failure; item() is the offending index into ArchSpec::items.
class ShapeTraceError : public ShapeError {
public:
  ShapeTraceError(std::size_t item, const std::string &what);
  std::size_t item() const noexcept { return item_; }

private:
  std::size_t item_;
};

struct TraceEntry {
  std::size_t item = 0;
  std::string label;
  Shape out; ///< per-sample extents (n = 1)
};

/// Exact (c, h, w) after every item. Also validates item ordering.
std::vector<TraceEntry> shape_trace(const ArchSpec &spec);

/// Per-sample width entering the first FC layer.
std::size_t flatten_width(const ArchSpec &spec);

std::string describe(const ArchItem &item);

nlohmann::json to_json(const ArchSpec &spec);
ArchSpec arch_spec_from_json(const nlohmann::json &j);

enum class ParamGroup { Conv, Fc };

std::string_view to_string(ParamGroup g);

/// Handle to one trainable tensor and its gradient buffer inside a Network.
template <typename T> struct ParamRef {
  std::string name;
  ParamGroup group;
  Tensor<T> *value;
  Tensor<T> *grad;
  bool is_weight; ///< false for biases and batch-norm affine terms
};

/// Non-trainable state that still belongs in a checkpoint (batch-norm running statistics).
template <typename T> struct BufferRef {
  std::string name;
  std::span<T> value;
};

namespace detail {
template <typename T> class Module;
}

template <typename T> class Network {
public:
  /// Deterministic given seed. Throws ShapeTraceError for untraceable specs.
  static Network build(const ArchSpec &spec, std::uint64_t seed, InitScheme init = InitScheme::HeNormal);

  Network(const Network &other);
  Network &operator=(const Network &other);
  Network(Network &&) noexcept;
  Network &operator=(Network &&) noexcept;
  ~Network();

  /// batch is (n, C, H, W) matching the spec input; returns (n, classes, 1, 1).
  Tensor<T> forward(const Tensor<T> &batch, Mode mode);

  /// Fills every parameter gradient (overwriting) from d(loss)/d(logits).
  /// Requires a preceding train-mode forward. Returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T> &grad_logits);

  std::vector<ParamRef<T>> parameters();
  std::vector<BufferRef<T>> buffers();
  std::size_t parameter_count() const;

  const ArchSpec &spec() const noexcept { return spec_; }
  const std::vector<TraceEntry> &trace() const noexcept { return trace_; }

private:
  Network() = default;

  ArchSpec spec_;
  std::vector<TraceEntry> trace_;
  std::vector<std::unique_ptr<detail::Module<T>>> modules_;
  bool ready_for_backward_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

} // namespace poolnet
