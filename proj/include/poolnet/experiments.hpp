#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "poolnet/tensor.hpp"

namespace poolnet {

/// Bernoulli frequency with its binomial standard error sqrt(p(1-p)/trials).
struct ProbabilityEstimate {
  double p = 0.0;
  std::size_t successes = 0;
  std::size_t trials = 0;
  double std_error = 0.0;

  static ProbabilityEstimate from_counts(std::size_t successes, std::size_t trials);
};

nlohmann::json to_json(const ProbabilityEstimate &e);

// ---------------------------------------------------------------------------
// Binary value tree

/// Complete binary tree of `depth` levels below an unvalued root. Node values
/// are stored in heap order without the root: children of heap node i are
/// 2i+1 and 2i+2, and heap node k > 0 lives at values[k - 1].
class ValueTree {
public:
  ValueTree(std::size_t depth, std::vector<double> values);

  std::size_t depth() const noexcept { return depth_; }
  const std::vector<double> &values() const noexcept { return values_; }
  double value(std::size_t heap_node) const { return values_.at(heap_node - 1); }

  static std::size_t node_count(std::size_t depth) { return (std::size_t{2} << depth) - 2; }

private:
  std::size_t depth_;
  std::vector<double> values_;
};

/// Root-to-leaf path as left (0) / right (1) choices, with the product of the
/// visited node values.
struct TreePath {
  std::vector<int> turns;
  double product = 1.0;
};

/// Level by level, take the child with the larger value; ties go left.
TreePath tree_greedy(const ValueTree &tree);

/// Maximum product over all 2^depth paths; ties go to the leftmost path.
TreePath tree_global(const ValueTree &tree);

/// Monte-Carlo frequency of trees on which the greedy product is strictly
/// below the global maximum. Node values are uniform over `levels`.
/// Trial t draws from make_rng(seed, t).
ProbabilityEstimate tree_disagreement_prob(std::size_t depth, const std::vector<double> &levels, std::size_t trials,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sequence pooling (SP) versus top pooling (TP)

struct SpTpConfig {
  std::size_t extent = 256;
  std::size_t in_channels = 1;
  /// Output channels of each conv layer; a single entry is repeated for every layer.
  std::vector<std::size_t> depths = {1};
  std::size_t layers = 10;
  std::vector<std::size_t> ns = {2, 4, 6};
  std::size_t samples = 2000;
  std::uint64_t seed = 1;
  /// Delta kernels on channel (o mod in_depth) instead of random filters.
  bool identity_filters = false;

  void validate() const;
  std::size_t depth_at(std::size_t layer) const;
};

struct SpTpPoint {
  std::size_t n = 0;
  ProbabilityEstimate estimate;
  /// Standard error of the mean per-sample event fraction. Events cluster
  /// within samples, so this is the honest spread; the binomial error treats
  /// every output position as independent.
  double sample_stderr = 0.0;
};

struct SpTpResult {
  std::vector<SpTpPoint> curve;
  /// Every sample fed both branches byte-identical filters and inputs.
  bool inputs_matched = true;
};

/// For every sample: one Gaussian input and one set of random 3x3 filters
/// (He normal, no bias, padding 1) from make_rng(seed, sample). SP pools MP2
/// after each of the first n conv+ReLU layers; TP runs all layers unpooled
/// then applies MP(2^n). Counts output positions with O_SP > O_TP. Every n
/// uses the same samples, and the TP chain is computed once per sample.
SpTpResult sp_tp_sweep(const SpTpConfig &cfg);

/// Single-n convenience wrapper around sp_tp_sweep.
ProbabilityEstimate sp_tp_probability(SpTpConfig cfg, std::size_t n);

struct SpTpVgg8Config {
  std::vector<std::size_t> depths = {64, 128, 256, 512, 512};
  std::size_t filter_sets = 5;
  std::uint64_t seed = 1;
  bool identity_filters = false;
};

/// Five conv+ReLU stages on (N, C, 2^5, 2^5) inputs. SP: MP2 after every
/// stage. TP: one MP(32) at the end. Each input yields one comparison per
/// output channel; filter set f comes from make_rng(seed, f).
SpTpPoint sp_tp_vgg8(const Tensor<float> &images, const SpTpVgg8Config &cfg);

nlohmann::json to_json(const SpTpConfig &cfg);
nlohmann::json to_json(const SpTpPoint &pt);

} // namespace poolnet
