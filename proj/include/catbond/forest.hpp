#pragma once

#include "catbond/cart.hpp"
#include "catbond/schema.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace catbond {

struct ForestParams {
  int n_trees = 700;
  int mtry = 3;
  int node_size = 5;
  int max_depth = -1;
  std::uint64_t master_seed = 0;

  void validate(int num_features) const;
  TreeParams tree_params(int tree_index) const;
  bool operator==(const ForestParams&) const = default;
};

// Seed of tree k's stream; bootstrap draws come first, then split sampling.
std::uint64_t tree_seed(std::uint64_t master_seed, int tree_index);

// N draws with replacement from N rows, returned as per-row multiplicities.
std::vector<int> draw_bootstrap(Eigen::Index n, Rng& rng);

class Forest {
 public:
  Forest(Schema schema, ForestParams params, Eigen::Index n_train, std::vector<RegressionTree> trees);

  const Schema& schema() const { return schema_; }
  const std::string& schema_fingerprint() const { return fingerprint_; }
  const ForestParams& params() const { return params_; }
  Eigen::Index n_train() const { return n_train_; }
  int num_trees() const { return static_cast<int>(trees_.size()); }
  const RegressionTree& tree(int k) const { return trees_[static_cast<std::size_t>(k)]; }
  std::span<const RegressionTree> trees() const { return trees_; }

  // Mean of the tree predictions. Throws SchemaMismatchError on a malformed row.
  double predict(std::span<const double> x) const;
  Eigen::VectorXd predict(const Dataset& ds) const;

  // The forest made of the first k trees.
  Forest prefix(int k) const;

  bool operator==(const Forest&) const = default;

 private:
  Schema schema_;
  std::string fingerprint_;
  ForestParams params_;
  Eigen::Index n_train_ = 0;
  std::vector<RegressionTree> trees_;
};

Forest fit_forest(const Dataset& ds, const ForestParams& params, int threads = 1);

struct OobEvaluation {
  Eigen::VectorXd prediction;  // NaN where the row was never out of bag
  std::vector<int> oob_count;  // trees for which the row was out of bag
  double mse_oob = 0.0;
  double tss = 0.0;
  double r2_oob = 0.0;
  Eigen::Index n_used = 0;  // rows with at least one out-of-bag tree
  Eigen::Index n_never_oob = 0;
};

// Out-of-bag predictions and accuracy. The mean, TSS and MSE all run over the
// rows with at least one out-of-bag tree; r2_oob = 1 - mse_oob / (tss / n_used).
OobEvaluation oob_predict(const Forest& f, const Dataset& ds);

// Throws SchemaMismatchError unless `ds` is shaped like f's training set.
void require_training_set(const Forest& f, const Dataset& ds);

}  // namespace catbond
