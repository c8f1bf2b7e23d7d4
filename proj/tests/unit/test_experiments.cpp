#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "poolnet/experiments.hpp"
#include "poolnet/random.hpp"

using namespace poolnet;

namespace {

// Level 1: (10, 1). Level 2: (10, 1) under the 10, (1000, 1) under the 1.
// Level 3: (10, 1) under the chain of tens, (1000, 1) under the 1000.
ValueTree worked_tree() {
  return ValueTree(3, {10, 1, 10, 1, 1000, 1, 10, 1, 1, 1, 1000, 1, 1, 1});
}

} // namespace

TEST(Estimate, FromCounts) {
  const auto e = ProbabilityEstimate::from_counts(25, 100);
  EXPECT_DOUBLE_EQ(e.p, 0.25);
  EXPECT_DOUBLE_EQ(e.std_error, std::sqrt(0.25 * 0.75 / 100));
  EXPECT_THROW(ProbabilityEstimate::from_counts(1, 0), std::invalid_argument);
  EXPECT_THROW(ProbabilityEstimate::from_counts(3, 2), std::invalid_argument);
  EXPECT_EQ(to_json(e)["stderr"].get<double>(), e.std_error);
}

TEST(Tree, WorkedExample) {
  const auto t = worked_tree();
  const auto g = tree_greedy(t);
  EXPECT_EQ(g.product, 1000.0);
  EXPECT_EQ(g.turns, (std::vector<int>{0, 0, 0}));
  const auto best = tree_global(t);
  EXPECT_EQ(best.product, 1e6);
  EXPECT_EQ(best.turns, (std::vector<int>{1, 0, 0}));
}

TEST(Tree, TiesAndTrivialCases) {
  const ValueTree flat(3, std::vector<double>(14, 2.0));
  EXPECT_EQ(tree_greedy(flat).product, 8.0);
  EXPECT_EQ(tree_greedy(flat).turns, (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(tree_global(flat).turns, tree_greedy(flat).turns);

  const ValueTree one(1, {3.0, 5.0});
  EXPECT_EQ(tree_greedy(one).product, 5.0);
  EXPECT_EQ(tree_global(one).product, 5.0);

  EXPECT_EQ(tree_disagreement_prob(3, {7.0}, 1000, 1).p, 0.0);
  EXPECT_EQ(tree_disagreement_prob(1, {1, 10, 1000}, 1000, 1).p, 0.0);
  EXPECT_THROW(ValueTree(2, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(ValueTree(1, {1, -2}), std::invalid_argument);
  EXPECT_EQ(ValueTree::node_count(3), 14u);
}

TEST(Tree, AgreesWithIndependentWalker) {
  Rng rng(5);
  std::uniform_int_distribution<int> pick(0, 2);
  const double levels[] = {1, 10, 1000};
  for (int t = 0; t < 5000; ++t) {
    oracle::Tree3 o{};
    std::vector<double> v(14);
    for (int i = 0; i < 14; ++i)
      v[i] = o.v[i] = levels[pick(rng)];
    const ValueTree tree(3, v);
    EXPECT_EQ(tree_greedy(tree).product, o.greedy());
    EXPECT_EQ(tree_global(tree).product, o.global());
    EXPECT_GE(tree_global(tree).product, tree_greedy(tree).product);
  }
}

TEST(Tree, MonteCarloMatchesExhaustiveOracle) {
  const double levels[] = {1, 10, 1000};
  const double exact = oracle::exhaustive_tree_disagreement(levels);
  const auto est = tree_disagreement_prob(3, {1, 10, 1000}, 20000, 3);
  EXPECT_NEAR(est.p, exact, 3 * est.std_error);
  EXPECT_EQ(est.trials, 20000u);
}

TEST(SpTp, IdentityFiltersGiveZero) {
  SpTpConfig cfg;
  cfg.extent = 64;
  cfg.samples = 5;
  cfg.identity_filters = true;
  const auto r = sp_tp_sweep(cfg);
  ASSERT_EQ(r.curve.size(), 3u);
  for (const auto &pt : r.curve) {
    EXPECT_EQ(pt.estimate.p, 0.0) << pt.n;
    EXPECT_EQ(pt.estimate.trials, 5u * (64u >> pt.n) * (64u >> pt.n));
  }
  EXPECT_TRUE(r.inputs_matched);
}

TEST(SpTp, ZeroPoolsMeansSameNetwork) {
  SpTpConfig cfg;
  cfg.extent = 32;
  cfg.samples = 3;
  EXPECT_EQ(sp_tp_probability(cfg, 0).p, 0.0);
}

TEST(SpTp, RandomFiltersGiveSmallPositiveProbability) {
  SpTpConfig cfg;
  cfg.extent = 64;
  cfg.samples = 40;
  cfg.ns = {2};
  const auto p = sp_tp_probability(cfg, 2);
  EXPECT_GT(p.p, 0.0);
  EXPECT_LT(p.p, 0.5);
  EXPECT_EQ(sp_tp_probability(cfg, 2).successes, p.successes);
}

TEST(SpTp, ConfigValidation) {
  SpTpConfig cfg;
  cfg.extent = 96;
  cfg.ns = {6};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.extent = 64;
  cfg.ns = {11};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.ns = {2};
  cfg.depths = {1, 2};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(SpTp, Vgg8IdentityAndBounds) {
  const auto images = oracle::gaussian({2, 3, 32, 32}, 6).cast<float>();
  SpTpVgg8Config cfg;
  cfg.depths = {8, 8, 8, 8, 8};
  cfg.filter_sets = 2;
  cfg.identity_filters = true;
  EXPECT_EQ(sp_tp_vgg8(images, cfg).estimate.p, 0.0);

  cfg.identity_filters = false;
  const auto pt = sp_tp_vgg8(images, cfg);
  EXPECT_EQ(pt.estimate.trials, 2u * 2u * 8u);
  EXPECT_GE(pt.estimate.p, 0.0);
  EXPECT_LE(pt.estimate.p, 1.0);

  EXPECT_THROW(sp_tp_vgg8(oracle::gaussian({1, 3, 30, 30}, 1).cast<float>(), cfg), ShapeError);
}
