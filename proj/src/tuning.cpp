#include "catbond/tuning.hpp"

#include "catbond/error.hpp"
#include "catbond/format.hpp"
#include "catbond/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace catbond {

using Eigen::Index;

std::vector<std::vector<Index>> kfold_partition(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw DataError("need at least 2 folds");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, {0x666f6c6473ULL}));
  rng.shuffle(std::span<Index>(order));
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < order.size(); ++i) out[i % out.size()].push_back(order[i]);
  for (auto& f : out) {
    if (f.size() < 2) throw DataError("fold too small: every fold needs at least 2 rows");
    std::sort(f.begin(), f.end());
  }
  return out;
}

std::vector<Index> complement(Index n, std::span<const Index> held_out) {
  std::vector<bool> out(static_cast<std::size_t>(n), false);
  for (Index i : held_out) out[static_cast<std::size_t>(i)] = true;
  std::vector<Index> rest;
  for (Index i = 0; i < n; ++i) {
    if (!out[static_cast<std::size_t>(i)]) rest.push_back(i);
  }
  return rest;
}

double heldout_r2(std::span<const double> y, std::span<const double> prediction) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sse = 0.0, var = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - prediction[i]) * (y[i] - prediction[i]);
    var += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0 - sse / var;
}

MtrySearchResult grid_search_mtry(const Dataset& ds, const MtrySearchOptions& options) {
  const int num_features = ds.num_features();
  std::vector<int> grid = options.grid;
  if (grid.empty()) {
    grid.resize(static_cast<std::size_t>(num_features));
    std::iota(grid.begin(), grid.end(), 1);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (int m : grid) {
    if (m < 1 || m > num_features) throw DataError("mtry grid value " + std::to_string(m) + " outside [1, P]");
  }

  MtrySearchResult result;
  result.folds = kfold_partition(ds.size(), options.folds, options.seed);
  const auto num_folds = result.folds.size();

  std::vector<Dataset> train_sets, test_sets;
  for (const auto& fold : result.folds) {
    const auto rest = complement(ds.size(), fold);
    train_sets.push_back(ds.subset(rest));
    test_sets.push_back(ds.subset(fold));
  }

  std::vector<double> r2(grid.size() * num_folds);
  parallel_for(r2.size(), options.threads, [&](std::size_t cell) {
    const std::size_t g = cell / num_folds;
    const std::size_t k = cell % num_folds;
    auto params = options.fixed;
    params.mtry = grid[g];
    params.master_seed = derive_seed(options.seed, {0x6376ULL, k});
    const auto forest = fit_forest(train_sets[k], params, 1);
    const Eigen::VectorXd pred = forest.predict(test_sets[k]);
    const auto& y = test_sets[k].response();
    r2[cell] = heldout_r2(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                          std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())));
  });

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    MtryCurvePoint pt;
    pt.mtry = grid[g];
    pt.fold_r2.assign(r2.begin() + static_cast<std::ptrdiff_t>(g * num_folds),
                      r2.begin() + static_cast<std::ptrdiff_t>((g + 1) * num_folds));
    pt.cv_r2 = std::accumulate(pt.fold_r2.begin(), pt.fold_r2.end(), 0.0) / static_cast<double>(num_folds);
    const double rounded = std::round(pt.cv_r2 * 1e4);
    if (rounded > best) {
      best = rounded;
      result.chosen_mtry = pt.mtry;
    }
    result.curve.push_back(std::move(pt));
  }
  return result;
}

std::vector<NtreeScanRow> ntree_scan(const Dataset& ds, std::span<const int> ks, const ForestParams& fixed,
                                     int threads) {
  if (ks.empty()) throw DataError("ntree scan needs at least one forest size");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || (i > 0 && ks[i] <= ks[i - 1])) throw DataError("forest sizes must be positive and ascending");
  }
  auto params = fixed;
  params.n_trees = ks.back();
  const auto full = fit_forest(ds, params, threads);
  std::vector<NtreeScanRow> rows;
  for (int k : ks) {
    const auto ev = oob_predict(full.prefix(k), ds);
    rows.push_back({k, ev.mse_oob, ev.r2_oob});
  }
  return rows;
}

int choose_n_trees(std::span<const NtreeScanRow> scan, double tolerance) {
  if (scan.empty()) throw DataError("empty ntree scan");
  for (std::size_t i = 0; i < scan.size(); ++i) {
    bool settled = true;
    for (std::size_t j = i + 1; j < scan.size() && settled; ++j) {
      settled = std::abs(scan[j].mse_oob - scan[i].mse_oob) <= tolerance * scan[i].mse_oob;
    }
    if (settled) return scan[i].n_trees;
  }
  return scan.back().n_trees;
}

void write_mtry_curve_csv(std::ostream& out, const MtrySearchResult& r) {
  out << "mtry";
  for (std::size_t k = 0; k < r.folds.size(); ++k) out << ",fold" << k + 1 << "_r2";
  out << ",cv_r2,chosen\n";
  for (const auto& pt : r.curve) {
    out << pt.mtry;
    for (double v : pt.fold_r2) out << ',' << format_number(v);
    out << ',' << format_number(pt.cv_r2) << ',' << (pt.mtry == r.chosen_mtry ? "true" : "false") << '\n';
  }
}

void write_ntree_scan_csv(std::ostream& out, std::span<const NtreeScanRow> scan) {
  out << "n_trees,mse_oob,r2_oob\n";
  for (const auto& row : scan) out << row.n_trees << ',' << format_number(row.mse_oob) << ',' << format_number(row.r2_oob) << '\n';
}

}  // namespace catbond
