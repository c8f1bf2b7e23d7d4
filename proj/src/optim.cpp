#include "poolnet/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "poolnet/arch.hpp"

namespace poolnet {

bool EpochBound::admits(int epoch) const noexcept {
  switch (op) {
  case Op::Always:
    return true;
  case Op::Less:
    return epoch < threshold;
  case Op::LessEqual:
    return epoch <= threshold;
  case Op::Greater:
    return epoch > threshold;
  case Op::GreaterEqual:
    return epoch >= threshold;
  }
  return false;
}

std::string EpochBound::str() const {
  const std::string t = std::to_string(threshold);
  switch (op) {
  case Op::Always:
    return "always";
  case Op::Less:
    return "<" + t;
  case Op::LessEqual:
    return "<=" + t;
  case Op::Greater:
    return ">" + t;
  case Op::GreaterEqual:
    return ">=" + t;
  }
  return "?";
}

const DecayPiece &DecaySchedule::piece_at(int epoch) const {
  for (const auto &p : pieces)
    if (p.when.admits(epoch))
      return p;
  throw std::logic_error("decay schedule has no piece covering epoch " + std::to_string(epoch));
}

void DecaySchedule::validate() const {
  if (pieces.empty())
    throw std::invalid_argument("decay schedule needs at least one piece");
  if (phase < 1)
    throw std::invalid_argument("decay phase must be >= 1");
  for (const auto &p : pieces) {
    if (p.period < 1)
      throw std::invalid_argument("decay period must be >= 1");
    if (!(p.factor > 0.0 && p.factor <= 1.0))
      throw std::invalid_argument("decay factor must lie in (0, 1]");
  }
}

std::vector<int> DecaySchedule::decay_epochs(int last) const {
  std::vector<int> out;
  for (int e = phase; e <= last; e += piece_at(e).period)
    out.push_back(e);
  return out;
}

double lr_at_epoch(const DecaySchedule &schedule, int epoch) {
  if (epoch < 0)
    throw std::invalid_argument("epoch must be >= 0");
  double rate = schedule.base_rate;
  for (int e = schedule.phase; e <= epoch;) {
    const DecayPiece &p = schedule.piece_at(e);
    rate *= p.factor;
    e += p.period;
  }
  return rate;
}

// ---------------------------------------------------------------------------
// Published tables

namespace {

using Op = EpochBound::Op;

DecayPiece piece(Op op, int threshold, double q, int dt) { return {{op, threshold}, q, dt}; }
DecayPiece always(double q, int dt) { return {{Op::Always, 0}, q, dt}; }

GroupHyper group(double eta, double mu, double alpha, std::vector<DecayPiece> pieces, int phase) {
  GroupHyper g;
  g.schedule.base_rate = eta;
  g.schedule.pieces = std::move(pieces);
  g.schedule.phase = phase;
  g.momentum = mu;
  g.l2 = alpha;
  return g;
}

TrainHyper two_groups(std::string arch, GroupHyper conv, GroupHyper fc, int epochs) {
  return TrainHyper{std::move(arch), std::move(conv), std::move(fc), epochs, 100, false};
}

TrainHyper lenet_row(std::string arch, double eta, double mu, double alpha, int epochs) {
  const GroupHyper g = group(eta, mu, alpha, {piece(Op::Less, 120, 0.8, 10), piece(Op::GreaterEqual, 120, 0.7, 10)}, 10);
  return TrainHyper{std::move(arch), g, g, epochs, 100, true};
}

TrainHyper lookup(const std::string &name) {
  // A-VGG16 and A-VGG8 run the FC decay 10 epochs out of phase with the CLs:
  // FC events at 10, 30, 50, ...; CL events at 20, 40, 60, ...
  if (name == "A-VGG16")
    return two_groups(name,
                      group(0.00721, 0.98, 1.15e-3, {piece(Op::LessEqual, 140, 0.65, 20), piece(Op::Greater, 140, 0.55, 20)}, 20),
                      group(0.0045, 0.982, 1.35e-3, {piece(Op::Less, 150, 0.65, 20), piece(Op::GreaterEqual, 150, 0.5, 20)}, 10),
                      280);
  if (name == "A-VGG14")
    return two_groups(name, group(0.0078, 0.985, 1.15e-3, {always(0.65, 20)}, 20),
                      group(6.05e-4, 0.98, 1.15e-3, {piece(Op::Less, 120, 0.55, 10), piece(Op::GreaterEqual, 120, 0.5, 10)}, 10),
                      200);
  if (name == "A-VGG13" || name == "A-VGG13-linear" || name == "A-VGG16-linear")
    return two_groups(name, group(0.0078, 0.98, 1.15e-3, {always(0.65, 20)}, 20),
                      group(0.00297, 0.985, 1.15e-3, {piece(Op::Less, 120, 0.55, 20), piece(Op::GreaterEqual, 120, 0.5, 20)}, 20),
                      200);
  if (name == "A-VGG8")
    return two_groups(name,
                      group(0.0145, 0.97, 1e-3, {piece(Op::LessEqual, 140, 0.66, 20), piece(Op::Greater, 140, 0.55, 20)}, 20),
                      group(0.002, 0.975, 1.2e-3, {piece(Op::Less, 150, 0.66, 20), piece(Op::GreaterEqual, 150, 0.5, 20)}, 10),
                      200);
  if (name == "A-VGG6")
    return two_groups(name,
                      group(9.75e-3, 0.972, 1.1e-3, {piece(Op::Less, 120, 0.65, 20), piece(Op::GreaterEqual, 120, 0.55, 20)}, 20),
                      group(1.95e-3, 0.98, 1.1e-3, {piece(Op::Less, 120, 0.65, 20), piece(Op::GreaterEqual, 120, 0.5, 20)}, 20),
                      200);
  if (name == "A-LeNet5-a")
    return lenet_row(name, 0.032, 0.92, 5e-4, 240);
  if (name == "A-LeNet5-b")
    return lenet_row(name, 0.03, 0.93, 4e-4, 280);
  if (name == "A-LeNet5-c")
    return lenet_row(name, 0.028, 0.925, 5e-4, 280);
  if (name == "A-LeNet5-d")
    return lenet_row(name, 0.032, 0.92, 5e-4, 240);
  if (name == "A-LeNet5-e")
    return lenet_row(name, 0.02, 0.922, 1.2e-3, 240);
  throw std::invalid_argument("no published hyperparameters for '" + name + "'");
}

} // namespace

const std::vector<std::string> &hyper_table_names() {
  static const std::vector<std::string> names = {"A-VGG6",     "A-VGG8",         "A-VGG13",        "A-VGG14",
                                                 "A-VGG16",    "A-VGG13-linear", "A-VGG16-linear", "A-LeNet5-a",
                                                 "A-LeNet5-b", "A-LeNet5-c",     "A-LeNet5-d",     "A-LeNet5-e"};
  return names;
}

TrainHyper hyper_table(std::string_view arch) {
  std::string name;
  try {
    name = canonical_arch_name(arch);
  } catch (const std::invalid_argument &) {
    throw std::invalid_argument("no published hyperparameters for '" + std::string(arch) + "'");
  }
  return lookup(name);
}

TrainHyper default_hyper(std::string_view arch) {
  const std::string name = canonical_arch_name(arch);
  std::string source = name;
  if (name == "LeNet5" || name.rfind("X-LeNet5", 0) == 0)
    source = "A-LeNet5-a";
  else if (name == "VGG16")
    source = "A-VGG16";
  else if (name == "VGG8")
    source = "A-VGG8";
  TrainHyper h = lookup(source);
  h.arch = name;
  return h;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const DecaySchedule &s) {
  nlohmann::json pieces = nlohmann::json::array();
  for (const auto &p : s.pieces)
    pieces.push_back({{"when", p.when.str()}, {"q", p.factor}, {"dt", p.period}});
  return {{"base_rate", s.base_rate}, {"phase", s.phase}, {"pieces", pieces}};
}

nlohmann::json to_json(const GroupHyper &g) {
  return {{"eta", g.eta()}, {"momentum", g.momentum}, {"l2", g.l2}, {"schedule", to_json(g.schedule)}};
}

nlohmann::json to_json(const TrainHyper &h) {
  return {{"arch", h.arch},       {"epochs", h.epochs},          {"batch_size", h.batch_size},
          {"single_group", h.single_group}, {"conv", to_json(h.conv)}, {"fc", to_json(h.fc)}};
}

namespace {

EpochBound parse_bound(const std::string &s) {
  if (s == "always")
    return {Op::Always, 0};
  auto num = [&](std::size_t skip) { return std::stoi(s.substr(skip)); };
  if (s.rfind("<=", 0) == 0)
    return {Op::LessEqual, num(2)};
  if (s.rfind(">=", 0) == 0)
    return {Op::GreaterEqual, num(2)};
  if (s.rfind("<", 0) == 0)
    return {Op::Less, num(1)};
  if (s.rfind(">", 0) == 0)
    return {Op::Greater, num(1)};
  throw std::invalid_argument("bad epoch bound '" + s + "' (use always, <N, <=N, >N, >=N)");
}

} // namespace

DecaySchedule decay_schedule_from_json(const nlohmann::json &j) {
  DecaySchedule s;
  s.base_rate = j.at("base_rate").get<double>();
  s.phase = j.at("phase").get<int>();
  for (const auto &p : j.at("pieces"))
    s.pieces.push_back({parse_bound(p.value("when", std::string("always"))), p.at("q").get<double>(),
                        p.at("dt").get<int>()});
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// SGD

template <typename T>
void sgd_update(std::span<T> theta, std::span<const T> grad, std::span<T> velocity, double lr, double momentum,
                double l2, NesterovForm form) {
  if (theta.size() != grad.size() || theta.size() != velocity.size())
    throw ShapeError("sgd_update: parameter, gradient and velocity sizes differ");
  const T eta = static_cast<T>(lr);
  const T mu = static_cast<T>(momentum);
  const T alpha = static_cast<T>(l2);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T g = grad[i] + alpha * theta[i];
    if (form == NesterovForm::RateInVelocity) {
      velocity[i] = mu * velocity[i] - eta * g;
      theta[i] += mu * velocity[i] - eta * g;
    } else {
      velocity[i] = mu * velocity[i] + g;
      theta[i] -= eta * (g + mu * velocity[i]);
    }
  }
}

template <typename T>
void sgd_step(std::vector<ParamRef<T>> &params, OptimizerState<T> &state, const GroupHyper &conv,
              const GroupHyper &fc, int epoch, const SgdOptions &options) {
  if (state.velocity.empty()) {
    for (const auto &p : params)
      state.velocity.emplace_back(p.value->shape(), T(0));
  }
  if (state.velocity.size() != params.size())
    throw ShapeError("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                     " tensors, network has " + std::to_string(params.size()));
  const double lr_conv = lr_at_epoch(conv.schedule, epoch);
  const double lr_fc = lr_at_epoch(fc.schedule, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamRef<T> &p = params[i];
    if (state.velocity[i].shape() != p.value->shape() || p.grad->shape() != p.value->shape())
      throw ShapeError("sgd_step: shape mismatch for " + p.name);
    const GroupHyper &h = p.group == ParamGroup::Conv ? conv : fc;
    const double l2 = (p.is_weight || options.decay_bias_and_norm) ? h.l2 : 0.0;
    sgd_update<T>(p.value->data(), std::as_const(*p.grad).data(), state.velocity[i].data(),
                  p.group == ParamGroup::Conv ? lr_conv : lr_fc, h.momentum, l2, options.form);
  }
  state.epoch = epoch;
  ++state.steps;
}

template void sgd_update<float>(std::span<float>, std::span<const float>, std::span<float>, double, double, double,
                                NesterovForm);
template void sgd_update<double>(std::span<double>, std::span<const double>, std::span<double>, double, double,
                                 double, NesterovForm);
template void sgd_step<float>(std::vector<ParamRef<float>> &, OptimizerState<float> &, const GroupHyper &,
                              const GroupHyper &, int, const SgdOptions &);
template void sgd_step<double>(std::vector<ParamRef<double>> &, OptimizerState<double> &, const GroupHyper &,
                               const GroupHyper &, int, const SgdOptions &);

} // namespace poolnet
