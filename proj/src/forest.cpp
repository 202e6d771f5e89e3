#include "catbond/forest.hpp"

#include "catbond/error.hpp"
#include "catbond/parallel.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace catbond {

using Eigen::Index;

void ForestParams::validate(int num_features) const {
  if (n_trees < 1) throw DataError("n_trees must be >= 1");
  tree_params(0).validate(num_features);
}

TreeParams ForestParams::tree_params(int tree_index) const {
  return TreeParams{mtry, node_size, max_depth, tree_seed(master_seed, tree_index)};
}

std::uint64_t tree_seed(std::uint64_t master_seed, int tree_index) {
  return derive_seed(master_seed, {0x7472656573ULL, static_cast<std::uint64_t>(tree_index)});
}

std::vector<int> draw_bootstrap(Index n, Rng& rng) {
  std::vector<int> inbag(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) ++inbag[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))];
  return inbag;
}

Forest::Forest(Schema schema, ForestParams params, Index n_train, std::vector<RegressionTree> trees)
    : schema_(std::move(schema)),
      fingerprint_(schema_.fingerprint()),
      params_(params),
      n_train_(n_train),
      trees_(std::move(trees)) {
  if (trees_.empty()) throw InvariantError("forest has no trees");
  for (const auto& t : trees_) {
    if (static_cast<Index>(t.inbag().size()) != n_train_) throw InvariantError("in-bag vector length differs from N");
    for (const auto& node : t.nodes()) {
      if (node.rule.feature >= schema_.num_features()) throw InvariantError("split on unknown feature");
    }
  }
}

double Forest::predict(std::span<const double> x) const {
  validate_predictors(schema_, x, 1);
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

Eigen::VectorXd Forest::predict(const Dataset& ds) const {
  if (ds.schema().fingerprint() != fingerprint_) throw SchemaMismatchError("dataset schema differs from the model's");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ds.size());
  for (const auto& t : trees_) {
    for (Index i = 0; i < ds.size(); ++i) out(i) += t.predict_row(ds, i);
  }
  return out / static_cast<double>(trees_.size());
}

Forest Forest::prefix(int k) const {
  if (k < 1 || k > num_trees()) throw DataError("prefix size out of range");
  auto p = params_;
  p.n_trees = k;
  return Forest(schema_, p, n_train_, std::vector<RegressionTree>(trees_.begin(), trees_.begin() + k));
}

Forest fit_forest(const Dataset& ds, const ForestParams& params, int threads) {
  params.validate(ds.num_features());
  const auto k = static_cast<std::size_t>(params.n_trees);
  std::vector<std::optional<RegressionTree>> slots(k);
  parallel_for(k, threads, [&](std::size_t t) {
    const auto tp = params.tree_params(static_cast<int>(t));
    Rng rng(tp.seed);
    auto inbag = draw_bootstrap(ds.size(), rng);
    slots[t].emplace(fit_tree(ds, std::move(inbag), tp, rng));
  });
  std::vector<RegressionTree> trees;
  trees.reserve(k);
  for (auto& s : slots) trees.push_back(std::move(*s));
  return Forest(ds.schema(), params, ds.size(), std::move(trees));
}

void require_training_set(const Forest& f, const Dataset& ds) {
  if (ds.schema().fingerprint() != f.schema_fingerprint()) {
    throw SchemaMismatchError("dataset schema differs from the model's");
  }
  if (ds.size() != f.n_train()) {
    throw SchemaMismatchError("dataset has " + std::to_string(ds.size()) + " rows, model was trained on " +
                              std::to_string(f.n_train()));
  }
}

OobEvaluation oob_predict(const Forest& f, const Dataset& ds) {
  require_training_set(f, ds);
  const Index n = ds.size();
  OobEvaluation ev;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  ev.oob_count.assign(static_cast<std::size_t>(n), 0);
  for (const auto& t : f.trees()) {
    const auto inbag = t.inbag();
    for (Index i = 0; i < n; ++i) {
      if (inbag[static_cast<std::size_t>(i)] != 0) continue;
      sum(i) += t.predict_row(ds, i);
      ++ev.oob_count[static_cast<std::size_t>(i)];
    }
  }
  ev.prediction = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  double y_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int c = ev.oob_count[static_cast<std::size_t>(i)];
    if (c == 0) {
      ++ev.n_never_oob;
      continue;
    }
    ev.prediction(i) = sum(i) / c;
    y_sum += ds.response()(i);
    ++ev.n_used;
  }
  if (ev.n_used == 0) throw DataError("no observation was out of bag in any tree");

  const double y_mean = y_sum / static_cast<double>(ev.n_used);
  double sse = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (ev.oob_count[static_cast<std::size_t>(i)] == 0) continue;
    const double y = ds.response()(i);
    sse += (y - ev.prediction(i)) * (y - ev.prediction(i));
    ev.tss += (y - y_mean) * (y - y_mean);
  }
  ev.mse_oob = sse / static_cast<double>(ev.n_used);
  ev.r2_oob = 1.0 - ev.mse_oob / (ev.tss / static_cast<double>(ev.n_used));
  return ev;
}

}  // namespace catbond
