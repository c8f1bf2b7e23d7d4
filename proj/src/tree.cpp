#include <cmath>
#include <random>
#include <stdexcept>

#include "poolnet/experiments.hpp"
#include "poolnet/random.hpp"

namespace poolnet {

ProbabilityEstimate ProbabilityEstimate::from_counts(std::size_t successes, std::size_t trials) {
  if (trials == 0)
    throw std::invalid_argument("probability estimate needs at least one trial");
  if (successes > trials)
    throw std::invalid_argument("more successes than trials");
  ProbabilityEstimate e;
  e.successes = successes;
  e.trials = trials;
  e.p = static_cast<double>(successes) / static_cast<double>(trials);
  e.std_error = std::sqrt(e.p * (1.0 - e.p) / static_cast<double>(trials));
  return e;
}

nlohmann::json to_json(const ProbabilityEstimate &e) {
  return {{"p", e.p}, {"successes", e.successes}, {"trials", e.trials}, {"stderr", e.std_error}};
}

ValueTree::ValueTree(std::size_t depth, std::vector<double> values) : depth_(depth), values_(std::move(values)) {
  if (depth == 0 || depth > 30)
    throw std::invalid_argument("tree depth must be in [1, 30]");
  if (values_.size() != node_count(depth))
    throw std::invalid_argument("depth-" + std::to_string(depth) + " tree needs " + std::to_string(node_count(depth)) +
                                " values, got " + std::to_string(values_.size()));
  for (double v : values_)
    if (!(v > 0.0))
      throw std::invalid_argument("tree node values must be positive");
}

TreePath tree_greedy(const ValueTree &tree) {
  TreePath path;
  std::size_t node = 0;
  for (std::size_t level = 0; level < tree.depth(); ++level) {
    const std::size_t left = 2 * node + 1;
    const bool right = tree.value(left + 1) > tree.value(left);
    node = left + (right ? 1 : 0);
    path.turns.push_back(right ? 1 : 0);
    path.product *= tree.value(node);
  }
  return path;
}

TreePath tree_global(const ValueTree &tree) {
  const std::size_t d = tree.depth();
  TreePath best;
  best.product = -1.0;
  for (std::size_t code = 0; code < (std::size_t{1} << d); ++code) {
    double product = 1.0;
    std::size_t node = 0;
    std::vector<int> turns(d);
    for (std::size_t level = 0; level < d; ++level) {
      turns[level] = static_cast<int>((code >> (d - 1 - level)) & 1U);
      node = 2 * node + 1 + static_cast<std::size_t>(turns[level]);
      product *= tree.value(node);
    }
    if (product > best.product) {
      best.product = product;
      best.turns = std::move(turns);
    }
  }
  return best;
}

ProbabilityEstimate tree_disagreement_prob(std::size_t depth, const std::vector<double> &levels, std::size_t trials,
                                           std::uint64_t seed) {
  if (levels.empty())
    throw std::invalid_argument("tree value distribution is empty");
  if (trials == 0)
    throw std::invalid_argument("trials must be >= 1");
  const std::size_t nodes = ValueTree::node_count(depth);
  std::size_t hits = 0;
  std::vector<double> values(nodes);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, t);
    std::uniform_int_distribution<std::size_t> pick(0, levels.size() - 1);
    for (auto &v : values)
      v = levels[pick(rng)];
    const ValueTree tree(depth, values);
    if (tree_global(tree).product > tree_greedy(tree).product)
      ++hits;
  }
  return ProbabilityEstimate::from_counts(hits, trials);
}

} // namespace poolnet
