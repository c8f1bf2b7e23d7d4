#include <cmath>
#include <random>
#include <stdexcept>

#include "poolnet/experiments.hpp"
#include "poolnet/layers.hpp"
#include "poolnet/pooling.hpp"
#include "poolnet/random.hpp"

namespace poolnet {

void SpTpConfig::validate() const {
  if (extent == 0 || in_channels == 0 || layers == 0 || samples == 0)
    throw std::invalid_argument("sptp: extent, in_channels, layers and samples must be >= 1");
  if (depths.empty() || (depths.size() != 1 && depths.size() != layers))
    throw std::invalid_argument("sptp: depths needs 1 or " + std::to_string(layers) + " entries");
  for (std::size_t d : depths)
    if (d == 0)
      throw std::invalid_argument("sptp: conv depth must be >= 1");
  if (ns.empty())
    throw std::invalid_argument("sptp: no n values");
  for (std::size_t n : ns) {
    if (n > layers)
      throw std::invalid_argument("sptp: n = " + std::to_string(n) + " exceeds layer count " + std::to_string(layers));
    if (n >= 63 || extent % (std::size_t{1} << n) != 0)
      throw std::invalid_argument("sptp: extent " + std::to_string(extent) + " not divisible by 2^" +
                                  std::to_string(n));
  }
}

std::size_t SpTpConfig::depth_at(std::size_t layer) const { return depths.size() == 1 ? depths[0] : depths.at(layer); }

namespace {

template <typename T> std::uint64_t checksum(const Tensor<T> &t, std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto *bytes = reinterpret_cast<const unsigned char *>(t.raw());
  for (std::size_t i = 0; i < t.size() * sizeof(T); ++i)
    h = (h ^ bytes[i]) * 0x100000001B3ULL;
  return h;
}

template <typename T> std::uint64_t checksum(const std::vector<ConvLayer<T>> &layers, const Tensor<T> &x) {
  std::uint64_t h = checksum(x);
  for (const auto &l : layers)
    h = checksum(l.filters, checksum(l.bias, h));
  return h;
}

template <typename T> void identity_fill(ConvLayer<T> &layer) {
  layer.filters.fill(T(0));
  const std::size_t k = layer.kernel();
  for (std::size_t o = 0; o < layer.out_depth(); ++o)
    layer.filters.at(o, o % layer.in_depth(), k / 2, k / 2) = T(1);
}

template <typename T>
std::vector<ConvLayer<T>> make_chain(std::size_t in_channels, const std::vector<std::size_t> &depths, bool identity,
                                     Rng &rng) {
  std::vector<ConvLayer<T>> layers;
  std::size_t cin = in_channels;
  for (std::size_t d : depths) {
    ConvLayer<T> l(cin, d, 3, 1);
    if (identity)
      identity_fill(l);
    else
      he_fill(l.filters, l.fan_in(), rng);
    layers.push_back(std::move(l));
    cin = d;
  }
  return layers;
}

/// conv+ReLU through every layer; MP2 after the first `pooled` of them.
template <typename T> Tensor<T> run_chain(const std::vector<ConvLayer<T>> &layers, Tensor<T> x, std::size_t pooled) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = relu(conv_forward(layers[l], x));
    if (l < pooled)
      x = pool_forward(PoolingOp::max(2), x).y;
  }
  return x;
}

template <typename T> Tensor<T> top_pool(const Tensor<T> &x, std::size_t n) {
  if (n == 0)
    return x;
  return pool_forward(PoolingOp::max(std::size_t{1} << n), x).y;
}

template <typename T> std::size_t count_greater(const Tensor<T> &sp, const Tensor<T> &tp) {
  if (sp.shape() != tp.shape())
    throw ShapeError("sptp: branch outputs differ in shape, " + sp.shape().str() + " vs " + tp.shape().str());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sp.size(); ++i)
    hits += sp[i] > tp[i] ? 1 : 0;
  return hits;
}

double mean_stderr(const std::vector<double> &xs) {
  if (xs.size() < 2)
    return 0.0;
  double mean = 0.0;
  for (double x : xs)
    mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs)
    ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

} // namespace

SpTpResult sp_tp_sweep(const SpTpConfig &cfg) {
  cfg.validate();
  std::vector<std::size_t> depths(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    depths[l] = cfg.depth_at(l);

  SpTpResult result;
  std::vector<std::size_t> hits(cfg.ns.size(), 0), positions(cfg.ns.size(), 0);
  std::vector<std::vector<double>> fractions(cfg.ns.size());
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Rng rng = make_rng(cfg.seed, s);
    Tensor<double> x(Shape{1, cfg.in_channels, cfg.extent, cfg.extent});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto &v : x.data())
      v = normal(rng);
    const auto layers = make_chain<double>(cfg.in_channels, depths, cfg.identity_filters, rng);

    const std::uint64_t tp_sum = checksum(layers, x);
    const Tensor<double> top = run_chain(layers, x, 0);
    for (std::size_t i = 0; i < cfg.ns.size(); ++i) {
      const std::size_t n = cfg.ns[i];
      if (checksum(layers, x) != tp_sum)
        result.inputs_matched = false;
      const Tensor<double> sp = run_chain(layers, x, n);
      const Tensor<double> tp = top_pool(top, n);
      const std::size_t h = count_greater(sp, tp);
      hits[i] += h;
      positions[i] += sp.size();
      fractions[i].push_back(static_cast<double>(h) / static_cast<double>(sp.size()));
    }
  }
  for (std::size_t i = 0; i < cfg.ns.size(); ++i)
    result.curve.push_back({cfg.ns[i], ProbabilityEstimate::from_counts(hits[i], positions[i]), mean_stderr(fractions[i])});
  return result;
}

ProbabilityEstimate sp_tp_probability(SpTpConfig cfg, std::size_t n) {
  cfg.ns = {n};
  return sp_tp_sweep(cfg).curve.front().estimate;
}

SpTpPoint sp_tp_vgg8(const Tensor<float> &images, const SpTpVgg8Config &cfg) {
  const Shape in = images.shape();
  const std::size_t stages = cfg.depths.size();
  if (images.empty() || stages == 0 || stages >= 31)
    throw std::invalid_argument("sp_tp_vgg8: need images and at least one stage");
  if (in.h != in.w || in.h != (std::size_t{1} << stages))
    throw ShapeError("sp_tp_vgg8: inputs must be 2^" + std::to_string(stages) + " square, got " + in.str());
  if (cfg.filter_sets == 0)
    throw std::invalid_argument("sp_tp_vgg8: filter_sets must be >= 1");

  constexpr std::size_t chunk = 10;
  std::size_t hits = 0, trials = 0;
  std::vector<double> fractions;
  for (std::size_t f = 0; f < cfg.filter_sets; ++f) {
    Rng rng = make_rng(cfg.seed, f);
    const auto layers = make_chain<float>(in.c, cfg.depths, cfg.identity_filters, rng);
    for (std::size_t start = 0; start < in.n; start += chunk) {
      const std::size_t count = std::min(chunk, in.n - start);
      Tensor<float> x(Shape{count, in.c, in.h, in.w});
      std::copy_n(images.sample(start).data(), count * in.sample(), x.raw());
      const Tensor<float> sp = run_chain(layers, x, stages);
      const Tensor<float> tp = top_pool(run_chain(layers, x, 0), stages);
      const std::size_t per_input = sp.shape().sample();
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t h = 0;
        for (std::size_t j = 0; j < per_input; ++j)
          h += sp[i * per_input + j] > tp[i * per_input + j] ? 1 : 0;
        hits += h;
        trials += per_input;
        fractions.push_back(static_cast<double>(h) / static_cast<double>(per_input));
      }
    }
  }
  return {stages, ProbabilityEstimate::from_counts(hits, trials), mean_stderr(fractions)};
}

nlohmann::json to_json(const SpTpConfig &cfg) {
  return {{"extent", cfg.extent}, {"in_channels", cfg.in_channels}, {"depths", cfg.depths},
          {"layers", cfg.layers}, {"ns", cfg.ns},                   {"samples", cfg.samples},
          {"seed", cfg.seed},     {"identity_filters", cfg.identity_filters}};
}

nlohmann::json to_json(const SpTpPoint &pt) {
  nlohmann::json j = to_json(pt.estimate);
  j["n"] = pt.n;
  j["sample_stderr"] = pt.sample_stderr;
  return j;
}

} // namespace poolnet
