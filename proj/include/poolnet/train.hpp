#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolnet/data.hpp"
#include "poolnet/network.hpp"
#include "poolnet/optim.hpp"

namespace poolnet {

enum class Precision { Float, Double };

struct TrainConfig {
  ArchSpec spec;
  TrainHyper hyper;
  int epochs = 1;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;
  /// Pins BLAS to one thread so reductions run in a fixed order.
  bool deterministic = true;
  AugmentPolicy augment;
  /// 0 keeps the whole split.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  Precision precision = Precision::Float;
  SgdOptions sgd;
  InitScheme init = InitScheme::HeNormal;
  /// Evaluate the untrained network before the first epoch.
  bool eval_initial = true;
  /// Write parameters here after the last epoch (empty: skip).
  std::filesystem::path checkpoint;

  /// Published hyperparameters for `arch`, with the spec built from the name.
  static TrainConfig for_arch(const std::string &arch);
};

nlohmann::json to_json(const TrainConfig &cfg);

struct EpochRecord {
  int epoch = 0; ///< 1-based
  double train_loss = 0.0;
  double first_batch_loss = 0.0;
  double last_batch_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double lr_conv = 0.0;
  double lr_fc = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double initial_test_acc = -1.0; ///< -1 when not evaluated
  double final_test_acc = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::string status = "ok";
  nlohmann::json config;
};

nlohmann::json to_json(const TrainReport &r);

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord &)>;

/// Shuffle, augment, forward, loss, backward and SGD step for every batch of
/// every epoch, then a test-set evaluation. Epoch e (0-based) trains at
/// lr_at_epoch(schedule, e). A non-finite loss stops training and sets
/// diverged; it is never swallowed.
TrainReport train(const TrainConfig &cfg, const Dataset &train_set, const Dataset &test_set,
                  const EpochCallback &on_epoch = {});

/// Top-1 accuracy in eval mode.
template <typename T> double evaluate(Network<T> &net, const Dataset &ds, std::size_t batch_size = 500);

/// Binary parameter dump: "PNCK", u32 count, then per parameter u32 name
/// length, name bytes and a raw tensor record.
template <typename T> void save_checkpoint(Network<T> &net, const std::filesystem::path &file);
template <typename T> void load_checkpoint(Network<T> &net, const std::filesystem::path &file);

} // namespace poolnet
