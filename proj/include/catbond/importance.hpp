#pragma once

// Variable importance: out-of-bag permutation importance and minimal depth
// with its mean-minimal-depth selection threshold.

#include "catbond/forest.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace catbond {

enum class PermutationScore { Raw, Normalized, Percent };

std::string to_string(PermutationScore s);
PermutationScore parse_permutation_score(const std::string& s);

struct PermutationOptions {
  std::uint64_t seed = 0;
  // Independent permutations per (tree, feature); their MSE increases are averaged.
  int repetitions = 1;
  PermutationScore primary = PermutationScore::Percent;
  int threads = 1;
  // Instrumentation hook: tree, feature, repetition, the tree's out-of-bag rows
  // and the rows their permuted values were taken from.
  std::function<void(int, int, int, std::span<const Eigen::Index>, std::span<const Eigen::Index>)> observer;
};

struct PermutationImportance {
  std::vector<std::string> features;
  std::vector<double> raw;             // mean over trees of the per-tree OOB MSE increase
  std::vector<double> standard_error;  // sd of the per-tree increases / sqrt(trees used)
  std::vector<double> normalized;      // raw / standard_error (0 when the error is 0)
  std::vector<double> percent;         // 100 * raw / forest OOB MSE
  int trees_used = 0;
  int degenerate_trees = 0;  // trees with fewer than two OOB rows, skipped
  double baseline_mse_oob = 0.0;
  PermutationScore primary = PermutationScore::Percent;
  std::vector<int> ranking;  // most important first

  const std::vector<double>& scores(PermutationScore s) const;
};

PermutationImportance permutation_importance(const Forest& f, const Dataset& ds, const PermutationOptions& options);

struct MinimalDepthImportance {
  std::vector<std::string> features;
  std::vector<double> mean_depth;   // forest average of per-tree minimal depth
  std::vector<int> tree_max_depth;  // deepest node of each tree
  double threshold = 0.0;
  std::vector<bool> selected;  // mean_depth < threshold
  std::vector<int> ranking;    // ascending mean depth, ties by feature index
};

// Per-feature minimal depth in one tree: the shallowest node split on the
// feature, or max_depth() + 1 if the tree never splits on it.
std::vector<int> tree_minimal_depths(const RegressionTree& t, int num_features);

MinimalDepthImportance minimal_depth(const Forest& f);

// Mean of the null minimal-depth distribution for one tree of depth D with P
// features. Depth d holds 2^d nodes and each node independently splits on a
// given feature with probability 1/P; mass not placed above D sits at D.
double null_mean_minimal_depth(int tree_depth, int num_features);

// Average of null_mean_minimal_depth over the trees.
double mean_minimal_depth_threshold(std::span<const int> tree_depths, int num_features);
double mean_minimal_depth_threshold(const Forest& f);

struct RankingRow {
  int position = 0;
  std::optional<int> permutation_feature;
  std::optional<double> permutation_score;
  std::optional<int> depth_feature;
  std::optional<double> depth_value;
  std::optional<bool> depth_selected;
};

struct RankingTable {
  std::vector<std::string> features;
  std::optional<PermutationImportance> permutation;
  std::optional<MinimalDepthImportance> depth;
  std::vector<RankingRow> rows;
  // Number of features ranked above the threshold line.
  std::optional<int> threshold_position;
};

RankingTable rank_report(std::optional<PermutationImportance> pi, std::optional<MinimalDepthImportance> md);

// feature,raw,normalized,percent,minimal_depth,selected with one row per feature.
void write_importance_csv(std::ostream& out, const RankingTable& table);
// position,permutation_feature,permutation_score,depth_feature,minimal_depth,selected
void write_ranking_csv(std::ostream& out, const RankingTable& table);
void write_ranking_text(std::ostream& out, const RankingTable& table);

}  // namespace catbond
