#pragma once

#include "catbond/forest.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace catbond {

// Seeded shuffle into `folds` disjoint groups whose sizes differ by at most one.
std::vector<std::vector<Eigen::Index>> kfold_partition(Eigen::Index n, int folds, std::uint64_t seed);

// Rows not in `held_out`, ascending.
std::vector<Eigen::Index> complement(Eigen::Index n, std::span<const Eigen::Index> held_out);

// 1 - MSE / population variance of the held-out responses.
double heldout_r2(std::span<const double> y, std::span<const double> prediction);

struct MtrySearchOptions {
  std::vector<int> grid;  // empty: 1..P
  int folds = 5;
  ForestParams fixed;     // mtry is overridden per grid point
  std::uint64_t seed = 0;
  int threads = 1;
};

struct MtryCurvePoint {
  int mtry = 0;
  std::vector<double> fold_r2;
  double cv_r2 = 0.0;  // mean held-out R^2 over folds
};

struct MtrySearchResult {
  std::vector<MtryCurvePoint> curve;
  int chosen_mtry = 0;
  std::vector<std::vector<Eigen::Index>> folds;
};

// Grid search with k-fold cross-validation. Every mtry is scored on the same
// folds with the same per-fold forest seed. The chosen mtry maximizes cv_r2
// compared at four decimals; ties go to the smaller mtry.
MtrySearchResult grid_search_mtry(const Dataset& ds, const MtrySearchOptions& options);

struct NtreeScanRow {
  int n_trees = 0;
  double mse_oob = 0.0;
  double r2_oob = 0.0;
};

// One forest per K with a shared master seed, so the K-tree forest is the
// first K trees of every larger one. `ks` must be ascending.
std::vector<NtreeScanRow> ntree_scan(const Dataset& ds, std::span<const int> ks, const ForestParams& fixed,
                                     int threads = 1);

// Smallest K after which MSE_OOB never moves more than `tolerance` (relative).
int choose_n_trees(std::span<const NtreeScanRow> scan, double tolerance = 0.01);

struct TuneResult {
  MtrySearchResult mtry;
  std::vector<NtreeScanRow> scan;
  int chosen_n_trees = 0;
};

void write_mtry_curve_csv(std::ostream& out, const MtrySearchResult& r);
void write_ntree_scan_csv(std::ostream& out, std::span<const NtreeScanRow> scan);

}  // namespace catbond
