#pragma once

// Unpruned CART regression trees grown on bootstrap multiplicities with a
// fresh random feature subset at every node.

#include "catbond/rng.hpp"
#include "catbond/schema.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace catbond {

struct TreeParams {
  int mtry = 3;
  // Nodes holding node_size or fewer (bootstrap-weighted) rows become leaves.
  int node_size = 5;
  // Maximum node depth; negative means unlimited.
  int max_depth = -1;
  std::uint64_t seed = 0;

  void validate(int num_features) const;
};

struct SplitRule {
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;         // continuous: x <= threshold goes left
  std::uint64_t left_levels = 0;  // categorical: level l goes left iff bit l is set

  bool goes_left(double x) const {
    return categorical ? ((left_levels >> static_cast<int>(x)) & 1U) != 0 : x <= threshold;
  }
  bool operator==(const SplitRule&) const = default;
};

struct SplitCandidate {
  SplitRule rule;
  double rss_after = 0.0;
};

struct TreeNode {
  SplitRule rule;  // rule.feature < 0 marks a leaf
  int left = -1;
  int right = -1;
  int depth = 0;
  double value = 0.0;  // weighted mean response of the node's training rows
  int count = 0;       // training rows in the node, counted with multiplicity

  bool is_leaf() const { return rule.feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
 public:
  // Checks structural invariants; throws InvariantError on violation.
  RegressionTree(std::vector<TreeNode> nodes, std::vector<int> inbag);

  std::span<const TreeNode> nodes() const { return nodes_; }
  const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  // Bootstrap multiplicity of each training row.
  std::span<const int> inbag() const { return inbag_; }
  // Depth of the deepest node (the root has depth 0).
  int max_depth() const { return max_depth_; }
  int num_leaves() const;

  // `get(p)` returns predictor p of the row being routed.
  template <class Getter>
  int leaf_for(const Getter& get) const {
    int i = 0;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = n.rule.goes_left(get(n.rule.feature)) ? n.left : n.right;
    }
    return i;
  }

  double predict(std::span<const double> x) const {
    return nodes_[static_cast<std::size_t>(leaf_for([&](int p) { return x[static_cast<std::size_t>(p)]; }))].value;
  }
  double predict_row(const Dataset& ds, Eigen::Index row) const {
    const auto& m = ds.features();
    return nodes_[static_cast<std::size_t>(leaf_for([&](int p) { return m(row, p); }))].value;
  }

  bool operator==(const RegressionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<int> inbag_;
  int max_depth_ = 0;
};

// Best RSS split of one feature over weighted observations. Continuous
// features try every midpoint between consecutive distinct values; categorical
// features try every two-way partition of the levels present. Levels absent
// from the observations are sent to the side with the larger weight (left on
// ties). Ties are resolved toward the smaller threshold or the numerically
// smaller left-level mask. Returns nullopt if the feature is constant.
std::optional<SplitCandidate> best_split(const Feature& feature, int feature_index, std::span<const double> x,
                                         std::span<const double> y, std::span<const double> weights);

RegressionTree fit_tree(const Dataset& ds, std::vector<int> inbag, const TreeParams& params, Rng& rng);
RegressionTree fit_tree(const Dataset& ds, std::vector<int> inbag, const TreeParams& params);

// Relative tolerance under which two candidate RSS values count as tied.
inline constexpr double kRssTieTolerance = 1e-12;

}  // namespace catbond
