#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poolnet/network.hpp"

namespace poolnet {

/// Predicate over the epoch at which a decay event fires.
struct EpochBound {
  enum class Op { Always, Less, LessEqual, Greater, GreaterEqual };
  Op op = Op::Always;
  int threshold = 0;

  bool admits(int epoch) const noexcept;
  std::string str() const;
};

/// Multiply by `factor` every `period` epochs while `when` admits the event epoch.
struct DecayPiece {
  EpochBound when;
  double factor = 1.0;
  int period = 1;
};

/// Piecewise step decay. Events fire at phase, phase + dt, ...; each event
/// uses the piece active at its own epoch, and the next event is that
/// piece's period later.
struct DecaySchedule {
  double base_rate = 0.0;
  std::vector<DecayPiece> pieces;
  int phase = 1;

  /// First piece admitting `epoch`; throws if none does.
  const DecayPiece &piece_at(int epoch) const;

  /// Event epochs in [phase, last].
  std::vector<int> decay_epochs(int last) const;

  void validate() const;
};

/// base_rate times the factor of every event at or before `epoch`.
double lr_at_epoch(const DecaySchedule &schedule, int epoch);

struct GroupHyper {
  DecaySchedule schedule;
  double momentum = 0.0;
  double l2 = 0.0;

  double eta() const noexcept { return schedule.base_rate; }
};

/// Published per-architecture training constants.
struct TrainHyper {
  std::string arch;
  GroupHyper conv;
  GroupHyper fc;
  int epochs = 0;
  std::size_t batch_size = 100;
  /// LeNet tables list a single row; both groups then share it.
  bool single_group = false;
};

/// Names that have a published table.
const std::vector<std::string> &hyper_table_names();

/// Throws std::invalid_argument for names without a table.
TrainHyper hyper_table(std::string_view arch);

/// hyper_table when available; otherwise the nearest published table
/// (LeNet5 and X-LeNet5-* use A-LeNet5-a, VGG16 uses A-VGG16, VGG8 uses A-VGG8).
TrainHyper default_hyper(std::string_view arch);

nlohmann::json to_json(const DecaySchedule &s);
nlohmann::json to_json(const GroupHyper &g);
nlohmann::json to_json(const TrainHyper &h);
DecaySchedule decay_schedule_from_json(const nlohmann::json &j);

enum class NesterovForm {
  /// v <- mu v - eta g'; theta <- theta + mu v - eta g'
  RateInVelocity,
  /// v <- mu v + g'; theta <- theta - eta (g' + mu v)
  RateOutside,
};

struct SgdOptions {
  NesterovForm form = NesterovForm::RateInVelocity;
  /// Apply the L2 term to biases and batch-norm gamma/beta as well as weights.
  bool decay_bias_and_norm = true;
};

/// One Nesterov/L2 update of a flat parameter block. g' = g + l2 * theta.
template <typename T>
void sgd_update(std::span<T> theta, std::span<const T> grad, std::span<T> velocity, double lr, double momentum,
                double l2, NesterovForm form = NesterovForm::RateInVelocity);

template <typename T> struct OptimizerState {
  std::vector<Tensor<T>> velocity;
  int epoch = 0;
  std::size_t steps = 0;
};

/// Updates every parameter with its group's hyperparameters at `epoch`.
template <typename T>
void sgd_step(std::vector<ParamRef<T>> &params, OptimizerState<T> &state, const GroupHyper &conv,
              const GroupHyper &fc, int epoch, const SgdOptions &options = {});

} // namespace poolnet
