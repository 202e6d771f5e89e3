#include "catbond/error.hpp"
#include "catbond/forest.hpp"
#include "catbond/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace catbond;

namespace {

Dataset sample(std::size_t n, std::uint64_t seed = 1) {
  auto cfg = synth::GeneratorConfig::calibrated();
  cfg.n = n;
  cfg.master_seed = seed;
  return synth::generate(cfg);
}

ForestParams small_params(int trees, std::uint64_t seed = 7) {
  ForestParams p;
  p.n_trees = trees;
  p.master_seed = seed;
  return p;
}

RegressionTree leaf(double value, std::vector<int> inbag) {
  TreeNode n;
  n.value = value;
  n.count = 3;
  return RegressionTree({n}, std::move(inbag));
}

Dataset three_rows() {
  Feature x;
  x.name = "x";
  Feature y;
  y.name = "y";
  Eigen::MatrixXd m(3, 1);
  m << 0, 1, 2;
  Eigen::VectorXd r(3);
  r << 1, 2, 6;
  return Dataset(Schema(y, {x}), m, r);
}

}  // namespace

TEST(Bootstrap, MultiplicitiesSumToN) {
  Rng rng(3);
  const auto w = draw_bootstrap(57, rng);
  ASSERT_EQ(w.size(), 57u);
  int total = 0;
  for (int m : w) {
    EXPECT_GE(m, 0);
    total += m;
  }
  EXPECT_EQ(total, 57);
}

TEST(Forest, SingleTreeEqualsTree) {
  const auto ds = sample(200);
  const auto f = fit_forest(ds, small_params(1));
  const auto tp = f.params().tree_params(0);
  Rng rng(tp.seed);
  auto inbag = draw_bootstrap(ds.size(), rng);
  const auto t = fit_tree(ds, inbag, tp, rng);
  EXPECT_EQ(t, f.tree(0));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd row = ds.features().row(i);
    EXPECT_EQ(f.predict(std::span<const double>(row.data(), row.size())), t.predict_row(ds, i));
  }
}

TEST(Forest, PredictionIsMeanOfTrees) {
  const auto ds = three_rows();
  ForestParams p;
  p.n_trees = 2;
  p.mtry = 1;
  const Forest f(ds.schema(), p, 3, {leaf(4, {1, 1, 1}), leaf(6, {1, 1, 1})});
  EXPECT_DOUBLE_EQ(f.predict(std::vector<double>{0.5}), 5.0);
}

TEST(Oob, HandBuiltToy) {
  const auto ds = three_rows();
  ForestParams p;
  p.n_trees = 3;
  p.mtry = 1;
  // Row 0 is out of bag for trees 1 and 2, row 1 never, row 2 for tree 0.
  const Forest f(ds.schema(), p, 3, {leaf(1, {2, 1, 0}), leaf(4, {0, 2, 1}), leaf(5, {0, 1, 2})});
  const auto ev = oob_predict(f, ds);
  EXPECT_EQ(ev.oob_count, (std::vector<int>{2, 0, 1}));
  EXPECT_DOUBLE_EQ(ev.prediction(0), 4.5);
  EXPECT_TRUE(std::isnan(ev.prediction(1)));
  EXPECT_DOUBLE_EQ(ev.prediction(2), 1.0);
  EXPECT_EQ(ev.n_used, 2);
  EXPECT_EQ(ev.n_never_oob, 1);
  // Errors 3.5 and 5 around y = {1, 6}; mean 3.5.
  EXPECT_DOUBLE_EQ(ev.mse_oob, (12.25 + 25.0) / 2);
  EXPECT_DOUBLE_EQ(ev.tss, 12.5);
  EXPECT_DOUBLE_EQ(ev.r2_oob, 1 - 18.625 / 6.25);
}

TEST(Oob, R2Identity) {
  const auto ds = sample(300);
  const auto ev = oob_predict(fit_forest(ds, small_params(60)), ds);
  EXPECT_EQ(ev.r2_oob, 1.0 - ev.mse_oob / (ev.tss / static_cast<double>(ev.n_used)));
  for (int c : ev.oob_count) {
    EXPECT_GE(c, 0);
    EXPECT_LE(c, 60);
  }
}

TEST(Oob, MeanCountNearBootstrapLimit) {
  const auto ds = sample(300);
  const int k = 200;
  const auto ev = oob_predict(fit_forest(ds, small_params(k)), ds);
  double mean = 0;
  for (int c : ev.oob_count) mean += c;
  mean /= static_cast<double>(ev.oob_count.size());
  const double expected = k * std::pow(1 - 1.0 / 300, 300);
  EXPECT_NEAR(mean, expected, 0.1 * expected);
  EXPECT_EQ(ev.n_never_oob, 0);
}

TEST(Forest, ThreadCountDoesNotChangeResult) {
  const auto ds = sample(250);
  const auto a = fit_forest(ds, small_params(40), 1);
  const auto b = fit_forest(ds, small_params(40), 3);
  EXPECT_EQ(a, b);
}

TEST(Forest, TreesUseDistinctSeeds) {
  const auto ds = sample(100);
  const auto f = fit_forest(ds, small_params(5));
  for (int k = 1; k < 5; ++k) EXPECT_FALSE(std::equal(f.tree(k).inbag().begin(), f.tree(k).inbag().end(), f.tree(0).inbag().begin()));
  EXPECT_NE(tree_seed(7, 0), tree_seed(7, 1));
  EXPECT_NE(tree_seed(7, 0), tree_seed(8, 0));
}

TEST(Forest, PrefixMatchesSmallerForest) {
  const auto ds = sample(150);
  const auto big = fit_forest(ds, small_params(30));
  const auto small = fit_forest(ds, small_params(10));
  const auto prefix = big.prefix(10);
  ASSERT_EQ(prefix.num_trees(), 10);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(prefix.tree(k), small.tree(k));
}

TEST(Forest, OobPurityUnderResponseDoctoring) {
  const auto ds = sample(120);
  const auto f = fit_forest(ds, small_params(25));
  const Eigen::Index row = 17;
  Eigen::VectorXd y = ds.response();
  y(row) += 50.0;
  const auto g = fit_forest(ds.with_response(y), small_params(25));
  int checked = 0;
  for (int k = 0; k < f.num_trees(); ++k) {
    if (f.tree(k).inbag()[row] != 0) continue;
    EXPECT_EQ(f.tree(k), g.tree(k)) << "tree " << k;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Forest, SingleLeafForestHasNearZeroR2) {
  const auto ds = sample(600, 4);
  auto p = small_params(100);
  p.node_size = 600;
  const auto f = fit_forest(ds, p);
  for (const auto& t : f.trees()) EXPECT_EQ(t.nodes().size(), 1u);
  EXPECT_LE(std::abs(oob_predict(f, ds).r2_oob), 0.05);
}

TEST(Forest, NoiselessLinearDataIsLearned) {
  auto cfg = synth::GeneratorConfig::calibrated();
  cfg.n = 600;
  cfg.noise_sd = 0;
  cfg.ground_truth.kind = synth::GroundTruthKind::Linear;
  cfg.ground_truth.linear = {};
  cfg.ground_truth.linear.el = 2.0;
  const auto ds = synth::generate(cfg);
  auto p = small_params(100);
  p.mtry = 9;
  const auto f = fit_forest(ds, p);
  // Interior points: el within its central range.
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.value(i, bond::kEl) < 0.5 || ds.value(i, bond::kEl) > 5) continue;
    const Eigen::VectorXd row = ds.features().row(i);
    EXPECT_NEAR(f.predict(std::span<const double>(row.data(), row.size())), ds.response()(i), 1.0);
  }
}

TEST(Forest, SchemaChecks) {
  const auto ds = sample(50);
  const auto f = fit_forest(ds, small_params(3));
  EXPECT_THROW(oob_predict(f, ds.subset(std::vector<Eigen::Index>{0, 1, 2})), SchemaMismatchError);
  EXPECT_THROW(f.predict(std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(oob_predict(f, three_rows()), SchemaMismatchError);
}

TEST(ForestParams, Validation) {
  ForestParams p;
  p.n_trees = 0;
  EXPECT_THROW(p.validate(9), DataError);
  p.n_trees = 10;
  p.mtry = 12;
  EXPECT_THROW(p.validate(9), DataError);
}
