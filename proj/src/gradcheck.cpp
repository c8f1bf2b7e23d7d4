#include "poolnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "poolnet/layers.hpp"
#include "poolnet/network.hpp"
#include "poolnet/pooling.hpp"
#include "poolnet/random.hpp"

namespace poolnet {

double gradcheck_rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

using D = Tensor<double>;
using Loss = std::function<double()>;

const std::vector<std::string> kStacks = {"MP2,MP2", "AP3,MP2", "MP3,AP2", "AP2,MP3"};

D gaussian(Shape s, Rng &rng) {
  D t(s);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto &v : t.data())
    v = normal(rng);
  return t;
}

std::size_t pick(Rng &rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double dot(const D &a, const D &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

/// Analytic and central-difference gradients gathered over one trial.
struct Pairs {
  std::vector<double> analytic, numeric;

  void add(D &x, const D &grad, const Loss &loss, double h) {
    if (grad.shape() != x.shape())
      throw ShapeError("gradcheck: analytic gradient shape " + grad.shape().str() + " != " + x.shape().str());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      x[i] = keep + h;
      const double up = loss();
      x[i] = keep - h;
      const double down = loss();
      x[i] = keep;
      analytic.push_back(grad[i]);
      numeric.push_back((up - down) / (2.0 * h));
    }
  }

  double worst() const {
    double scale = 0.0;
    for (double v : numeric)
      scale = std::max(scale, std::abs(v));
    const double floor = std::max(1e-3 * scale, 1e-8);
    double w = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
      w = std::max(w, gradcheck_rel_error(analytic[i], numeric[i], floor));
    return w;
  }
};

double trial_conv(Rng &rng, double h) {
  const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
  const std::size_t pad = k == 3 ? pick(rng, 0, 1) : 0;
  const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 3, 6), pick(rng, 3, 6)};
  ConvLayer<double> layer(in.c, pick(rng, 1, 3), k, pad);
  layer.filters = gaussian(layer.filters.shape(), rng);
  layer.bias = gaussian(layer.bias.shape(), rng);
  D x = gaussian(in, rng);
  const D r = gaussian(layer.output_shape(in), rng);
  const Loss loss = [&] { return dot(conv_forward(layer, x), r); };
  const auto g = conv_backward(layer, x, r);
  Pairs p;
  p.add(x, g.input, loss, h);
  p.add(layer.filters, g.params[0], loss, h);
  p.add(layer.bias, g.params[1], loss, h);
  return p.worst();
}

double trial_fc(Rng &rng, double h) {
  const Shape in{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 2), pick(rng, 1, 3)};
  FcLayer<double> layer(in.sample(), pick(rng, 1, 7));
  layer.weights = gaussian(layer.weights.shape(), rng);
  layer.bias = gaussian(layer.bias.shape(), rng);
  D x = gaussian(in, rng);
  const D r = gaussian(Shape{in.n, layer.out_units(), 1, 1}, rng);
  const Loss loss = [&] { return dot(fc_forward(layer, x), r); };
  const auto g = fc_backward(layer, x, r);
  Pairs p;
  p.add(x, g.input, loss, h);
  p.add(layer.weights, g.params[0], loss, h);
  p.add(layer.bias, g.params[1], loss, h);
  return p.worst();
}

double trial_batchnorm(Rng &rng, double h) {
  const Shape in{pick(rng, 2, 4), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
  BatchNormLayer<double> layer(in.c);
  layer.gamma = gaussian(layer.gamma.shape(), rng);
  layer.beta = gaussian(layer.beta.shape(), rng);
  D x = gaussian(in, rng);
  const D r = gaussian(in, rng);
  const Loss loss = [&] {
    BatchNormLayer<double> scratch = layer;
    return dot(batchnorm_forward(scratch, x, Mode::Train).y, r);
  };
  BatchNormLayer<double> live = layer;
  const auto fwd = batchnorm_forward(live, x, Mode::Train);
  const auto g = batchnorm_backward(layer, fwd.cache, r);
  Pairs p;
  p.add(x, g.input, loss, h);
  p.add(layer.gamma, g.params[0], loss, h);
  p.add(layer.beta, g.params[1], loss, h);
  return p.worst();
}

double trial_softmax(Rng &rng, double h) {
  const std::size_t n = pick(rng, 1, 4);
  D logits = gaussian(Shape{n, 10, 1, 1}, rng);
  std::vector<int> labels(n);
  for (auto &l : labels)
    l = static_cast<int>(pick(rng, 0, 9));
  const Loss loss = [&] { return softmax_cross_entropy(logits, std::span<const int>(labels)).loss; };
  const auto res = softmax_cross_entropy(logits, std::span<const int>(labels));
  Pairs p;
  p.add(logits, res.grad, loss, h);
  return p.worst();
}

double trial_stack(const PoolingStack &stack, Rng &rng, double h) {
  const std::size_t f = stack.total_factor();
  const Shape in{pick(rng, 1, 2), pick(rng, 1, 2), f * pick(rng, 1, 2), f * pick(rng, 1, 2)};
  D x = gaussian(in, rng);
  const auto fwd = stack_forward(stack, x);
  const D r = gaussian(fwd.y.shape(), rng);
  const Loss loss = [&] { return dot(stack_forward(stack, x).y, r); };
  Pairs p;
  p.add(x, stack_backward(stack, fwd.memos, r), loss, h);
  return p.worst();
}

ArchSpec tiny_spec() {
  ArchSpec s;
  s.name = "gradcheck-tiny";
  s.in_channels = 2;
  s.in_height = 4;
  s.in_width = 4;
  s.items = {ConvBlock{2, 2, 3, 1, true}, PoolItem{PoolingOp::max(2)}, FlattenItem{}, FcItem{10}, SoftmaxOutput{10}};
  return s;
}

double trial_network(Rng &rng, double h) {
  Network<double> net = Network<double>::build(tiny_spec(), rng());
  const std::size_t n = pick(rng, 2, 3);
  D x = gaussian(Shape{n, 2, 4, 4}, rng);
  std::vector<int> labels(n);
  for (auto &l : labels)
    l = static_cast<int>(pick(rng, 0, 9));
  const Loss loss = [&] {
    return softmax_cross_entropy(net.forward(x, Mode::Train), std::span<const int>(labels)).loss;
  };
  const auto res = softmax_cross_entropy(net.forward(x, Mode::Train), std::span<const int>(labels));
  const D dx = net.backward(res.grad);
  auto params = net.parameters();
  std::vector<D> grads;
  for (const auto &p : params)
    grads.push_back(*p.grad);
  Pairs p;
  p.add(x, dx, loss, h);
  for (std::size_t i = 0; i < params.size(); ++i)
    p.add(*params[i].value, grads[i], loss, h);
  return p.worst();
}

} // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names = {"conv", "fc", "batchnorm", "softmax_ce"};
  for (const auto &s : kStacks)
    names.push_back("stack:" + s);
  names.push_back("network");
  return names;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions &opt, const std::vector<std::string> &only) {
  const auto names = gradcheck_names();
  for (const auto &n : only)
    if (std::ranges::find(names, n) == names.end())
      throw std::invalid_argument("unknown gradcheck row '" + n + "'");
  std::vector<GradcheckRow> rows;
  for (std::size_t r = 0; r < names.size(); ++r) {
    const std::string &name = names[r];
    if (!only.empty() && std::ranges::find(only, name) == only.end())
      continue;
    GradcheckRow row;
    row.name = name;
    row.trials = opt.trials;
    row.tolerance = name == "network" ? opt.network_tolerance : opt.layer_tolerance;
    for (std::size_t t = 0; t < opt.trials; ++t) {
      Rng rng = make_rng(derive_seed(opt.seed, r), t);
      double err = 0.0;
      if (name == "conv")
        err = trial_conv(rng, opt.h);
      else if (name == "fc")
        err = trial_fc(rng, opt.h);
      else if (name == "batchnorm")
        err = trial_batchnorm(rng, opt.h);
      else if (name == "softmax_ce")
        err = trial_softmax(rng, opt.h);
      else if (name == "network")
        err = trial_network(rng, opt.h);
      else
        err = trial_stack(PoolingStack::parse(name.substr(6)), rng, opt.h);
      row.max_rel_error = std::max(row.max_rel_error, err);
    }
    row.passed = row.max_rel_error < row.tolerance;
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const GradcheckRow &row) {
  return {{"name", row.name},
          {"trials", row.trials},
          {"max_rel_error", row.max_rel_error},
          {"tolerance", row.tolerance},
          {"passed", row.passed}};
}

} // namespace poolnet
