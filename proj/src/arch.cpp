#include "poolnet/arch.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace poolnet {

namespace {

ConvBlock vgg_conv(std::size_t count, std::size_t depth) { return ConvBlock{count, depth, 3, 1, true}; }
ConvBlock lenet_conv(std::size_t depth) { return ConvBlock{1, depth, 5, 0, false}; }

void add_fc_head(ArchSpec &s, const std::vector<std::size_t> &hidden, Activation act) {
  s.items.push_back(FlattenItem{});
  for (std::size_t units : hidden) {
    s.items.push_back(FcItem{units});
    s.items.push_back(ActivationItem{act});
  }
  s.items.push_back(FcItem{10});
  s.items.push_back(SoftmaxOutput{10});
}

ArchSpec a_vgg(std::string name, std::vector<ArchItem> body, const std::vector<std::size_t> &hidden,
               Activation act = Activation::Relu) {
  ArchSpec s;
  s.name = std::move(name);
  s.items = std::move(body);
  add_fc_head(s, hidden, act);
  return s;
}

ArchSpec lenet(std::string name, const std::vector<PoolingOp> &after_first, const std::vector<PoolingOp> &after_second) {
  ArchSpec s;
  s.name = std::move(name);
  s.items.push_back(lenet_conv(6));
  for (const auto &op : after_first)
    s.items.push_back(PoolItem{op});
  s.items.push_back(lenet_conv(16));
  for (const auto &op : after_second)
    s.items.push_back(PoolItem{op});
  add_fc_head(s, {120, 84}, Activation::Relu);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

const PoolingOp MP2 = PoolingOp::max(2), MP3 = PoolingOp::max(3), MP4 = PoolingOp::max(4), MP8 = PoolingOp::max(8);
const PoolingOp AP2 = PoolingOp::avg(2), AP3 = PoolingOp::avg(3), AP4 = PoolingOp::avg(4);

ArchSpec make(const std::string &name) {
  const std::vector<ArchItem> small_front = {vgg_conv(1, 64), vgg_conv(1, 128), vgg_conv(1, 256)};
  const std::vector<ArchItem> deep_front = {vgg_conv(2, 64), vgg_conv(2, 128), vgg_conv(3, 256)};
  auto with = [](std::vector<ArchItem> items, std::initializer_list<ArchItem> more) {
    items.insert(items.end(), more);
    return items;
  };

  if (name == "A-VGG6")
    return a_vgg(name, with(small_front, {PoolItem{AP2}, vgg_conv(2, 512), PoolItem{MP8}}), {});
  if (name == "A-VGG8")
    return a_vgg(name, with(small_front, {PoolItem{AP2}, vgg_conv(2, 512), PoolItem{MP4}}), {8192, 8192});
  if (name == "A-VGG13" || name == "A-VGG13-linear")
    return a_vgg(name, with(deep_front, {PoolItem{AP4}, vgg_conv(3, 512), PoolItem{MP4}}), {2048, 2048},
                 name == "A-VGG13" ? Activation::Relu : Activation::Linear);
  if (name == "A-VGG14")
    return a_vgg(name, with(deep_front, {PoolItem{AP4}, vgg_conv(6, 512), PoolItem{MP2}}), {});
  if (name == "A-VGG16" || name == "A-VGG16-linear")
    return a_vgg(name, with(deep_front, {PoolItem{AP4}, vgg_conv(6, 512), PoolItem{MP2}}), {4096, 4096},
                 name == "A-VGG16" ? Activation::Relu : Activation::Linear);
  if (name == "VGG16")
    return a_vgg(name,
                 {vgg_conv(2, 64), PoolItem{MP2}, vgg_conv(2, 128), PoolItem{MP2}, vgg_conv(3, 256), PoolItem{MP2},
                  vgg_conv(3, 512), PoolItem{MP2}, vgg_conv(3, 512), PoolItem{MP2}},
                 {4096, 4096});
  if (name == "VGG8")
    return a_vgg(name,
                 {vgg_conv(1, 64), PoolItem{MP2}, vgg_conv(1, 128), PoolItem{MP2}, vgg_conv(1, 256), PoolItem{MP2},
                  vgg_conv(1, 512), PoolItem{MP2}, vgg_conv(1, 512), PoolItem{MP2}},
                 {4096, 4096});
  if (name == "LeNet5")
    return lenet(name, {MP2}, {MP2});
  if (name == "A-LeNet5-a")
    return lenet(name, {}, {AP2, MP2});
  if (name == "A-LeNet5-b")
    return lenet(name, {}, {MP2, AP2});
  if (name == "A-LeNet5-c")
    return lenet(name, {}, {AP3, MP2});
  if (name == "A-LeNet5-d")
    return lenet(name, {}, {MP3, AP2});
  if (name == "A-LeNet5-e")
    return lenet(name, {}, {AP2, MP3});
  // Single (4x4) pool after the second conv layer; not one of the published variants.
  if (name == "X-LeNet5-MP4")
    return lenet(name, {}, {MP4});
  if (name == "X-LeNet5-AP4")
    return lenet(name, {}, {AP4});
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

} // namespace

const std::vector<std::string> &arch_names() {
  static const std::vector<std::string> names = {
      "VGG16",      "VGG8",       "A-VGG6",     "A-VGG8",     "A-VGG13",      "A-VGG14",      "A-VGG16",
      "A-VGG13-linear", "A-VGG16-linear", "LeNet5", "A-LeNet5-a", "A-LeNet5-b", "A-LeNet5-c", "A-LeNet5-d",
      "A-LeNet5-e", "X-LeNet5-MP4", "X-LeNet5-AP4"};
  return names;
}

std::string canonical_arch_name(std::string_view name) {
  const std::string key = lower(name);
  for (const auto &n : arch_names())
    if (lower(n) == key)
      return n;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

ArchSpec build_spec(std::string_view name) { return make(canonical_arch_name(name)); }

std::size_t param_count(const ArchSpec &spec) {
  const auto trace = shape_trace(spec);
  std::size_t channels = spec.in_channels;
  std::size_t width = 0;
  std::size_t total = 0;
  for (const auto &e : trace) {
    const ArchItem &item = spec.items[e.item];
    if (const auto *conv = std::get_if<ConvBlock>(&item)) {
      for (std::size_t l = 0; l < conv->count; ++l) {
        total += channels * conv->depth * conv->kernel * conv->kernel + conv->depth;
        if (conv->batchnorm)
          total += 2 * conv->depth;
        channels = conv->depth;
      }
    } else if (std::holds_alternative<FlattenItem>(item)) {
      width = e.out.c;
    } else if (const auto *fc = std::get_if<FcItem>(&item)) {
      total += width * fc->units + fc->units;
      width = fc->units;
    }
  }
  return total;
}

} // namespace poolnet
