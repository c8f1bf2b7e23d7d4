#include "poolnet/train.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gemm.hpp"
#include "poolnet/arch.hpp"

namespace poolnet {

TrainConfig TrainConfig::for_arch(const std::string &arch) {
  TrainConfig cfg;
  cfg.spec = build_spec(arch);
  cfg.hyper = default_hyper(arch);
  cfg.epochs = cfg.hyper.epochs;
  cfg.batch_size = cfg.hyper.batch_size;
  return cfg;
}

nlohmann::json to_json(const TrainConfig &cfg) {
  return {{"spec", to_json(cfg.spec)},
          {"hyper", to_json(cfg.hyper)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"deterministic", cfg.deterministic},
          {"augment",
           {{"enabled", cfg.augment.enabled},
            {"flip_prob", cfg.augment.flip_prob},
            {"max_shift", cfg.augment.max_shift},
            {"fill", cfg.augment.fill}}},
          {"train_limit", cfg.train_limit},
          {"test_limit", cfg.test_limit},
          {"precision", cfg.precision == Precision::Float ? "float" : "double"},
          {"nesterov_form", cfg.sgd.form == NesterovForm::RateInVelocity ? "rate_in_velocity" : "rate_outside"},
          {"decay_bias_and_norm", cfg.sgd.decay_bias_and_norm},
          {"init", cfg.init == InitScheme::HeNormal ? "he_normal" : "he_uniform"},
          {"eval_initial", cfg.eval_initial},
          {"checkpoint", cfg.checkpoint.string()}};
}

nlohmann::json to_json(const TrainReport &r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto &e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"first_batch_loss", e.first_batch_loss},
                      {"last_batch_loss", e.last_batch_loss},
                      {"train_acc", e.train_acc},
                      {"test_acc", e.test_acc},
                      {"lr_conv", e.lr_conv},
                      {"lr_fc", e.lr_fc},
                      {"seconds", e.seconds}});
  nlohmann::json j = {{"status", r.status},
                      {"diverged", r.diverged},
                      {"final_test_acc", r.final_test_acc},
                      {"wall_seconds", r.wall_seconds},
                      {"epochs", epochs},
                      {"config", r.config}};
  if (r.initial_test_acc >= 0.0)
    j["initial_test_acc"] = r.initial_test_acc;
  return j;
}

namespace {

template <typename T> std::size_t argmax_row(const Tensor<T> &logits, std::size_t i) {
  const auto row = logits.sample(i);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <typename T>
TrainReport run(const TrainConfig &cfg, const Dataset &full_train, const Dataset &full_test,
                const EpochCallback &on_epoch) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  if (cfg.epochs < 0)
    throw std::invalid_argument("train: epochs must be >= 0");
  if (cfg.batch_size == 0)
    throw std::invalid_argument("train: batch_size must be >= 1");
  cfg.hyper.conv.schedule.validate();
  cfg.hyper.fc.schedule.validate();
  if (cfg.deterministic)
    detail::set_blas_single_threaded();

  const Dataset train_set = cfg.train_limit ? full_train.head(cfg.train_limit) : full_train;
  const Dataset test_set = cfg.test_limit ? full_test.head(cfg.test_limit) : full_test;

  TrainReport report;
  report.config = to_json(cfg);
  Network<T> net = Network<T>::build(cfg.spec, derive_seed(cfg.seed, 1), cfg.init);
  auto params = net.parameters();
  OptimizerState<T> state;

  if (cfg.eval_initial) {
    report.initial_test_acc = evaluate(net, test_set);
    report.final_test_acc = report.initial_test_acc;
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (int e = 0; e < cfg.epochs && !report.diverged; ++e) {
    const auto te = clock::now();
    Rng shuffle_rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(e));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(e));

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr_conv = lr_at_epoch(cfg.hyper.conv.schedule, e);
    rec.lr_fc = lr_at_epoch(cfg.hyper.fc.schedule, e);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0, used_batches = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      // Batch norm needs two samples; a lone trailing sample is skipped.
      if (end - begin < 2 && batches > 1)
        continue;
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor<T> x = gather_batch<T>(train_set, idx, &cfg.augment, derive_seed(epoch_seed, b));
      const std::vector<int> labels = gather_labels(train_set, idx);

      const Tensor<T> logits = net.forward(x, Mode::Train);
      const LossResult<T> loss = softmax_cross_entropy(logits, std::span<const int>(labels));
      const double l = static_cast<double>(loss.loss);
      if (!std::isfinite(l)) {
        report.diverged = true;
        report.status = "diverged: non-finite loss at epoch " + std::to_string(e + 1) + ", batch " + std::to_string(b);
        break;
      }
      if (used_batches == 0)
        rec.first_batch_loss = l;
      rec.last_batch_loss = l;
      loss_sum += l * static_cast<double>(idx.size());
      seen += idx.size();
      ++used_batches;
      for (std::size_t i = 0; i < idx.size(); ++i)
        correct += argmax_row(logits, i) == static_cast<std::size_t>(labels[i]) ? 1 : 0;

      net.backward(loss.grad);
      sgd_step(params, state, cfg.hyper.conv, cfg.hyper.fc, e, cfg.sgd);
    }
    if (report.diverged)
      break;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    rec.test_acc = evaluate(net, test_set);
    rec.seconds = std::chrono::duration<double>(clock::now() - te).count();
    report.final_test_acc = rec.test_acc;
    report.epochs.push_back(rec);
    if (on_epoch && !on_epoch(rec)) {
      report.status = "stopped after epoch " + std::to_string(rec.epoch);
      break;
    }
  }
  if (!cfg.checkpoint.empty() && !report.diverged)
    save_checkpoint(net, cfg.checkpoint);
  report.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return report;
}

constexpr std::array<char, 4> kCheckpointMagic = {'P', 'N', 'C', 'K'};

template <typename U> void put(std::ostream &os, U v) {
  std::array<char, sizeof(U)> b;
  std::memcpy(b.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big)
    std::ranges::reverse(b);
  os.write(b.data(), sizeof(U));
}

template <typename U> U get(std::istream &is) {
  std::array<char, sizeof(U)> b;
  if (!is.read(b.data(), sizeof(U)))
    throw DataError("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    std::ranges::reverse(b);
  U v;
  std::memcpy(&v, b.data(), sizeof(U));
  return v;
}

template <typename T> std::vector<std::pair<std::string, std::span<T>>> state_views(Network<T> &net) {
  std::vector<std::pair<std::string, std::span<T>>> out;
  for (auto &p : net.parameters())
    out.emplace_back(p.name, p.value->data());
  for (auto &b : net.buffers())
    out.emplace_back(b.name, b.value);
  return out;
}

} // namespace

TrainReport train(const TrainConfig &cfg, const Dataset &train_set, const Dataset &test_set,
                  const EpochCallback &on_epoch) {
  if (cfg.precision == Precision::Double)
    return run<double>(cfg, train_set, test_set, on_epoch);
  return run<float>(cfg, train_set, test_set, on_epoch);
}

template <typename T> double evaluate(Network<T> &net, const Dataset &ds, std::size_t batch_size) {
  if (ds.size() == 0)
    throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, ds.size());
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor<T> logits = net.forward(gather_batch<T>(ds, idx), Mode::Eval);
    for (std::size_t i = 0; i < idx.size(); ++i)
      correct += argmax_row(logits, i) == static_cast<std::size_t>(ds.labels[idx[i]]) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

template <typename T> void save_checkpoint(Network<T> &net, const std::filesystem::path &file) {
  const auto views = state_views(net);
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(views.size()));
    for (const auto &[name, data] : views) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_raw_tensor(os, Tensor<T>(Shape{1, 1, 1, data.size()}, std::vector<T>(data.begin(), data.end())));
    }
    if (!os)
      throw DataError("write failed for checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, file);
}

template <typename T> void load_checkpoint(Network<T> &net, const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  if (!is)
    throw DataError("cannot open checkpoint '" + file.string() + "'");
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw DataError("'" + file.string() + "' is not a checkpoint");
  auto views = state_views(net);
  const auto count = get<std::uint32_t>(is);
  if (count != views.size())
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, network expects " +
                    std::to_string(views.size()));
  for (auto &[name, data] : views) {
    std::string stored(get<std::uint32_t>(is), '\0');
    is.read(stored.data(), static_cast<std::streamsize>(stored.size()));
    if (stored != name)
      throw DataError("checkpoint entry '" + stored + "' where '" + name + "' was expected");
    const Tensor<T> t = read_raw_tensor<T>(is);
    if (t.size() != data.size())
      throw DataError("checkpoint entry '" + name + "' has " + std::to_string(t.size()) + " values, expected " +
                      std::to_string(data.size()));
    std::ranges::copy(t.data(), data.begin());
  }
}

template double evaluate<float>(Network<float> &, const Dataset &, std::size_t);
template double evaluate<double>(Network<double> &, const Dataset &, std::size_t);
template void save_checkpoint<float>(Network<float> &, const std::filesystem::path &);
template void save_checkpoint<double>(Network<double> &, const std::filesystem::path &);
template void load_checkpoint<float>(Network<float> &, const std::filesystem::path &);
template void load_checkpoint<double>(Network<double> &, const std::filesystem::path &);

} // namespace poolnet
