#include "poolnet/network.hpp"

#include <stdexcept>
#include <type_traits>

namespace poolnet {

ShapeTraceError::ShapeTraceError(std::size_t item, const std::string &what)
    : ShapeError("item " + std::to_string(item) + ": " + what), item_(item) {}

namespace {

std::string shape_chw(const Shape &s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

} // namespace

std::string describe(const ArchItem &item) {
  return std::visit(
      [](const auto &it) -> std::string {
        using I = std::decay_t<decltype(it)>;
        if constexpr (std::is_same_v<I, ConvBlock>) {
          return "Conv." + std::to_string(it.count) + "-" + std::to_string(it.depth) + " (" +
                 std::to_string(it.kernel) + "x" + std::to_string(it.kernel) + ", pad " + std::to_string(it.padding) +
                 (it.batchnorm ? ", bn)" : ")");
        } else if constexpr (std::is_same_v<I, PoolItem>) {
          return it.op.str();
        } else if constexpr (std::is_same_v<I, FlattenItem>) {
          return "Flatten";
        } else if constexpr (std::is_same_v<I, FcItem>) {
          return "FC " + std::to_string(it.units);
        } else if constexpr (std::is_same_v<I, ActivationItem>) {
          return it.fn == Activation::Relu ? "ReLU" : "Linear";
        } else {
          return "Softmax " + std::to_string(it.classes);
        }
      },
      item);
}

std::vector<TraceEntry> shape_trace(const ArchSpec &spec) {
  if (spec.in_channels == 0 || spec.in_height == 0 || spec.in_width == 0)
    throw ShapeTraceError(0, "input extents must be positive");
  Shape cur{1, spec.in_channels, spec.in_height, spec.in_width};
  bool flattened = false;
  bool saw_softmax = false;
  std::vector<TraceEntry> out;
  for (std::size_t i = 0; i < spec.items.size(); ++i) {
    const ArchItem &item = spec.items[i];
    if (saw_softmax)
      throw ShapeTraceError(i, "items after SoftmaxOutput");
    if (const auto *conv = std::get_if<ConvBlock>(&item)) {
      if (flattened)
        throw ShapeTraceError(i, "conv block after Flatten");
      if (conv->count == 0 || conv->depth == 0 || conv->kernel == 0)
        throw ShapeTraceError(i, "conv block needs positive count, depth and kernel");
      for (std::size_t l = 0; l < conv->count; ++l) {
        if (cur.h + 2 * conv->padding < conv->kernel || cur.w + 2 * conv->padding < conv->kernel)
          throw ShapeTraceError(i, "input " + shape_chw(cur) + " smaller than kernel " + std::to_string(conv->kernel));
        cur = Shape{1, conv->depth, cur.h + 2 * conv->padding - conv->kernel + 1,
                    cur.w + 2 * conv->padding - conv->kernel + 1};
      }
    } else if (const auto *pool = std::get_if<PoolItem>(&item)) {
      if (flattened)
        throw ShapeTraceError(i, "pooling after Flatten");
      const std::size_t k = pool->op.window;
      if (k < 2)
        throw ShapeTraceError(i, "pooling window must be >= 2");
      if (cur.h % k != 0 || cur.w % k != 0)
        throw ShapeTraceError(i, "extent " + std::to_string(cur.h) + "x" + std::to_string(cur.w) +
                                     " not divisible by " + pool->op.str());
      cur = Shape{1, cur.c, cur.h / k, cur.w / k};
    } else if (std::holds_alternative<FlattenItem>(item)) {
      if (flattened)
        throw ShapeTraceError(i, "second Flatten");
      cur = Shape{1, cur.sample(), 1, 1};
      flattened = true;
    } else if (const auto *fc = std::get_if<FcItem>(&item)) {
      if (!flattened)
        throw ShapeTraceError(i, "FC layer before Flatten");
      if (fc->units == 0)
        throw ShapeTraceError(i, "FC layer needs at least one unit");
      cur = Shape{1, fc->units, 1, 1};
    } else if (const auto *sm = std::get_if<SoftmaxOutput>(&item)) {
      if (!flattened)
        throw ShapeTraceError(i, "SoftmaxOutput before Flatten");
      if (cur.c != sm->classes)
        throw ShapeTraceError(i, "SoftmaxOutput expects " + std::to_string(sm->classes) + " logits, got " +
                                     std::to_string(cur.c));
      saw_softmax = true;
    }
    out.push_back({i, describe(item), cur});
  }
  if (!saw_softmax)
    throw ShapeTraceError(spec.items.size(), "missing SoftmaxOutput");
  return out;
}

std::size_t flatten_width(const ArchSpec &spec) {
  const auto trace = shape_trace(spec);
  for (const auto &e : trace)
    if (std::holds_alternative<FlattenItem>(spec.items[e.item]))
      return e.out.c;
  throw ShapeTraceError(spec.items.size(), "missing Flatten");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json item_to_json(const ArchItem &item) {
  return std::visit(
      [](const auto &it) -> nlohmann::json {
        using I = std::decay_t<decltype(it)>;
        if constexpr (std::is_same_v<I, ConvBlock>) {
          return {{"type", "conv"},        {"count", it.count},     {"depth", it.depth},
                  {"kernel", it.kernel},   {"padding", it.padding}, {"batchnorm", it.batchnorm}};
        } else if constexpr (std::is_same_v<I, PoolItem>) {
          return {{"type", "pool"}, {"kind", it.op.kind == PoolKind::Max ? "max" : "avg"}, {"window", it.op.window}};
        } else if constexpr (std::is_same_v<I, FlattenItem>) {
          return {{"type", "flatten"}};
        } else if constexpr (std::is_same_v<I, FcItem>) {
          return {{"type", "fc"}, {"units", it.units}};
        } else if constexpr (std::is_same_v<I, ActivationItem>) {
          return {{"type", "activation"}, {"fn", it.fn == Activation::Relu ? "relu" : "linear"}};
        } else {
          return {{"type", "softmax"}, {"classes", it.classes}};
        }
      },
      item);
}

ArchItem item_from_json(const nlohmann::json &j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv") {
    ConvBlock b;
    b.count = j.value("count", b.count);
    b.depth = j.at("depth").get<std::size_t>();
    b.kernel = j.value("kernel", b.kernel);
    b.padding = j.value("padding", b.padding);
    b.batchnorm = j.value("batchnorm", b.batchnorm);
    return b;
  }
  if (type == "pool") {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "max" && kind != "avg")
      throw std::invalid_argument("pool kind must be 'max' or 'avg', got '" + kind + "'");
    return PoolItem{{kind == "max" ? PoolKind::Max : PoolKind::Avg, j.at("window").get<std::size_t>()}};
  }
  if (type == "flatten")
    return FlattenItem{};
  if (type == "fc")
    return FcItem{j.at("units").get<std::size_t>()};
  if (type == "activation") {
    const std::string fn = j.at("fn").get<std::string>();
    if (fn != "relu" && fn != "linear")
      throw std::invalid_argument("activation must be 'relu' or 'linear', got '" + fn + "'");
    return ActivationItem{fn == "relu" ? Activation::Relu : Activation::Linear};
  }
  if (type == "softmax")
    return SoftmaxOutput{j.value("classes", std::size_t{10})};
  throw std::invalid_argument("unknown arch item type '" + type + "'");
}

} // namespace

nlohmann::json to_json(const ArchSpec &spec) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto &it : spec.items)
    items.push_back(item_to_json(it));
  return {{"name", spec.name}, {"input", {spec.in_channels, spec.in_height, spec.in_width}}, {"items", items}};
}

ArchSpec arch_spec_from_json(const nlohmann::json &j) {
  ArchSpec spec;
  spec.name = j.value("name", std::string{});
  if (j.contains("input")) {
    const auto &in = j.at("input");
    if (!in.is_array() || in.size() != 3)
      throw std::invalid_argument("spec 'input' must be [channels, height, width]");
    spec.in_channels = in[0].get<std::size_t>();
    spec.in_height = in[1].get<std::size_t>();
    spec.in_width = in[2].get<std::size_t>();
  }
  for (const auto &item : j.at("items"))
    spec.items.push_back(item_from_json(item));
  return spec;
}

std::string_view to_string(ParamGroup g) { return g == ParamGroup::Conv ? "CL" : "FC"; }

// ---------------------------------------------------------------------------
// Modules

namespace detail {

template <typename T> class Module {
public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T> &x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T> &g) = 0;
  virtual void collect(std::vector<ParamRef<T>> &) {}
  virtual void collect_buffers(std::vector<BufferRef<T>> &) {}
  virtual std::size_t parameter_count() const { return 0; }
  virtual std::unique_ptr<Module> clone() const = 0;
};

template <typename T> class ConvModule final : public Module<T> {
public:
  ConvModule(std::string name, ConvLayer<T> layer) : name_(std::move(name)), layer_(std::move(layer)) {
    dfilters_ = Tensor<T>(layer_.filters.shape());
    dbias_ = Tensor<T>(layer_.bias.shape());
  }
  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    input_ = x;
    return conv_forward(layer_, x);
  }
  Tensor<T> backward(const Tensor<T> &g) override {
    auto b = conv_backward(layer_, input_, g);
    dfilters_ = std::move(b.params[0]);
    dbias_ = std::move(b.params[1]);
    return std::move(b.input);
  }
  void collect(std::vector<ParamRef<T>> &out) override {
    out.push_back({name_ + ".filters", ParamGroup::Conv, &layer_.filters, &dfilters_, true});
    out.push_back({name_ + ".bias", ParamGroup::Conv, &layer_.bias, &dbias_, false});
  }
  std::size_t parameter_count() const override { return layer_.filters.size() + layer_.bias.size(); }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<ConvModule>(*this); }

private:
  std::string name_;
  ConvLayer<T> layer_;
  Tensor<T> dfilters_, dbias_, input_;
};

template <typename T> class BatchNormModule final : public Module<T> {
public:
  BatchNormModule(std::string name, std::size_t channels) : name_(std::move(name)), layer_(channels) {
    dgamma_ = Tensor<T>(layer_.gamma.shape());
    dbeta_ = Tensor<T>(layer_.beta.shape());
  }
  Tensor<T> forward(const Tensor<T> &x, Mode mode) override {
    auto r = batchnorm_forward(layer_, x, mode);
    cache_ = std::move(r.cache);
    return std::move(r.y);
  }
  Tensor<T> backward(const Tensor<T> &g) override {
    auto b = batchnorm_backward(layer_, cache_, g);
    dgamma_ = std::move(b.params[0]);
    dbeta_ = std::move(b.params[1]);
    return std::move(b.input);
  }
  void collect(std::vector<ParamRef<T>> &out) override {
    out.push_back({name_ + ".gamma", ParamGroup::Conv, &layer_.gamma, &dgamma_, false});
    out.push_back({name_ + ".beta", ParamGroup::Conv, &layer_.beta, &dbeta_, false});
  }
  void collect_buffers(std::vector<BufferRef<T>> &out) override {
    out.push_back({name_ + ".running_mean", std::span<T>(layer_.running_mean)});
    out.push_back({name_ + ".running_var", std::span<T>(layer_.running_var)});
  }
  std::size_t parameter_count() const override { return layer_.gamma.size() + layer_.beta.size(); }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<BatchNormModule>(*this); }

private:
  std::string name_;
  BatchNormLayer<T> layer_;
  BatchNormCache<T> cache_;
  Tensor<T> dgamma_, dbeta_;
};

template <typename T> class ReluModule final : public Module<T> {
public:
  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    output_ = relu(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T> &g) override {
    Tensor<T> d = g;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(output_[i] > T(0)))
        d[i] = T(0);
    return d;
  }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<ReluModule>(*this); }

private:
  Tensor<T> output_;
};

template <typename T> class PoolModule final : public Module<T> {
public:
  explicit PoolModule(PoolingOp op) : op_(op) {}
  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    auto r = pool_forward(op_, x);
    memo_ = std::move(r.memo);
    return std::move(r.y);
  }
  Tensor<T> backward(const Tensor<T> &g) override { return pool_backward(op_, memo_, g); }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<PoolModule>(*this); }

private:
  PoolingOp op_;
  PoolMemo memo_;
};

template <typename T> class FlattenModule final : public Module<T> {
public:
  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    in_ = x.shape();
    return x.reshaped(Shape{in_.n, in_.sample(), 1, 1});
  }
  Tensor<T> backward(const Tensor<T> &g) override { return g.reshaped(in_); }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<FlattenModule>(*this); }

private:
  Shape in_;
};

template <typename T> class FcModule final : public Module<T> {
public:
  FcModule(std::string name, FcLayer<T> layer) : name_(std::move(name)), layer_(std::move(layer)) {
    dweights_ = Tensor<T>(layer_.weights.shape());
    dbias_ = Tensor<T>(layer_.bias.shape());
  }
  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    input_ = x;
    return fc_forward(layer_, x);
  }
  Tensor<T> backward(const Tensor<T> &g) override {
    auto b = fc_backward(layer_, input_, g);
    dweights_ = std::move(b.params[0]);
    dbias_ = std::move(b.params[1]);
    return std::move(b.input);
  }
  void collect(std::vector<ParamRef<T>> &out) override {
    out.push_back({name_ + ".weights", ParamGroup::Fc, &layer_.weights, &dweights_, true});
    out.push_back({name_ + ".bias", ParamGroup::Fc, &layer_.bias, &dbias_, false});
  }
  std::size_t parameter_count() const override { return layer_.weights.size() + layer_.bias.size(); }
  std::unique_ptr<Module<T>> clone() const override { return std::make_unique<FcModule>(*this); }

private:
  std::string name_;
  FcLayer<T> layer_;
  Tensor<T> dweights_, dbias_, input_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Network

template <typename T> Network<T> Network<T>::build(const ArchSpec &spec, std::uint64_t seed, InitScheme init) {
  Network net;
  net.spec_ = spec;
  net.trace_ = shape_trace(spec);
  Rng rng = make_rng(seed, 0);
  std::size_t channels = spec.in_channels;
  std::size_t width = 0;
  std::size_t conv_id = 0, fc_id = 0;
  for (const auto &item : spec.items) {
    if (const auto *conv = std::get_if<ConvBlock>(&item)) {
      for (std::size_t l = 0; l < conv->count; ++l) {
        ++conv_id;
        ConvLayer<T> layer(channels, conv->depth, conv->kernel, conv->padding);
        he_fill(layer.filters, layer.fan_in(), rng, init);
        net.modules_.push_back(
            std::make_unique<detail::ConvModule<T>>("conv" + std::to_string(conv_id), std::move(layer)));
        if (conv->batchnorm)
          net.modules_.push_back(
              std::make_unique<detail::BatchNormModule<T>>("bn" + std::to_string(conv_id), conv->depth));
        net.modules_.push_back(std::make_unique<detail::ReluModule<T>>());
        channels = conv->depth;
      }
    } else if (const auto *pool = std::get_if<PoolItem>(&item)) {
      net.modules_.push_back(std::make_unique<detail::PoolModule<T>>(pool->op));
    } else if (std::holds_alternative<FlattenItem>(item)) {
      net.modules_.push_back(std::make_unique<detail::FlattenModule<T>>());
    } else if (const auto *fc = std::get_if<FcItem>(&item)) {
      ++fc_id;
      if (width == 0)
        width = flatten_width(spec);
      FcLayer<T> layer(width, fc->units);
      he_fill(layer.weights, width, rng, init);
      net.modules_.push_back(std::make_unique<detail::FcModule<T>>("fc" + std::to_string(fc_id), std::move(layer)));
      width = fc->units;
    } else if (const auto *act = std::get_if<ActivationItem>(&item)) {
      if (act->fn == Activation::Relu)
        net.modules_.push_back(std::make_unique<detail::ReluModule<T>>());
    }
  }
  return net;
}

template <typename T> Network<T>::Network(const Network &other) : spec_(other.spec_), trace_(other.trace_) {
  for (const auto &m : other.modules_)
    modules_.push_back(m->clone());
  ready_for_backward_ = other.ready_for_backward_;
}

template <typename T> Network<T> &Network<T>::operator=(const Network &other) {
  if (this != &other) {
    Network tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

template <typename T> Network<T>::Network(Network &&) noexcept = default;
template <typename T> Network<T> &Network<T>::operator=(Network &&) noexcept = default;
template <typename T> Network<T>::~Network() = default;

template <typename T> Tensor<T> Network<T>::forward(const Tensor<T> &batch, Mode mode) {
  const Shape s = batch.shape();
  if (s.c != spec_.in_channels || s.h != spec_.in_height || s.w != spec_.in_width)
    throw ShapeError("network expects (n," + std::to_string(spec_.in_channels) + "," +
                     std::to_string(spec_.in_height) + "," + std::to_string(spec_.in_width) + ") input, got " +
                     s.str());
  Tensor<T> x = batch;
  for (auto &m : modules_)
    x = m->forward(x, mode);
  ready_for_backward_ = mode == Mode::Train;
  return x;
}

template <typename T> Tensor<T> Network<T>::backward(const Tensor<T> &grad_logits) {
  if (!ready_for_backward_)
    throw std::logic_error("Network::backward needs a preceding train-mode forward");
  Tensor<T> g = grad_logits;
  for (std::size_t i = modules_.size(); i-- > 0;)
    g = modules_[i]->backward(g);
  return g;
}

template <typename T> std::vector<ParamRef<T>> Network<T>::parameters() {
  std::vector<ParamRef<T>> out;
  for (auto &m : modules_)
    m->collect(out);
  return out;
}

template <typename T> std::vector<BufferRef<T>> Network<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (auto &m : modules_)
    m->collect_buffers(out);
  return out;
}

template <typename T> std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto &m : modules_)
    total += m->parameter_count();
  return total;
}

template class Network<float>;
template class Network<double>;

} // namespace poolnet
