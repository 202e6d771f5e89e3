#include "catbond/importance.hpp"

#include "catbond/error.hpp"
#include "catbond/format.hpp"
#include "catbond/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace catbond {

using Eigen::Index;

std::string to_string(PermutationScore s) {
  switch (s) {
    case PermutationScore::Raw:
      return "raw";
    case PermutationScore::Normalized:
      return "normalized";
    case PermutationScore::Percent:
      return "percent";
  }
  return "percent";
}

PermutationScore parse_permutation_score(const std::string& s) {
  if (s == "raw") return PermutationScore::Raw;
  if (s == "normalized") return PermutationScore::Normalized;
  if (s == "percent") return PermutationScore::Percent;
  throw DataError("unknown permutation score '" + s + "' (raw, normalized, percent)");
}

const std::vector<double>& PermutationImportance::scores(PermutationScore s) const {
  switch (s) {
    case PermutationScore::Raw:
      return raw;
    case PermutationScore::Normalized:
      return normalized;
    case PermutationScore::Percent:
      return percent;
  }
  return percent;
}

namespace {

std::vector<std::string> feature_names(const Schema& s) {
  std::vector<std::string> names;
  for (const auto& f : s.features()) names.push_back(f.name);
  return names;
}

// Indices ordered by key, ties by index.
template <class Less>
std::vector<int> order_by(int n, Less less) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), less);
  return idx;
}

}  // namespace

PermutationImportance permutation_importance(const Forest& f, const Dataset& ds, const PermutationOptions& options) {
  require_training_set(f, ds);
  if (options.repetitions < 1) throw DataError("repetitions must be >= 1");
  const int num_features = ds.num_features();
  const int num_trees = f.num_trees();
  const auto& x = ds.features();
  const auto& y = ds.response();

  // diffs[k * P + p]; NaN marks a skipped tree
  std::vector<double> diffs(static_cast<std::size_t>(num_trees * num_features),
                            std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(num_trees), options.threads, [&](std::size_t k) {
    const auto& tree = f.tree(static_cast<int>(k));
    std::vector<Index> oob;
    for (Index i = 0; i < ds.size(); ++i) {
      if (tree.inbag()[static_cast<std::size_t>(i)] == 0) oob.push_back(i);
    }
    if (oob.size() < 2) return;

    double base = 0.0;
    for (Index i : oob) {
      const double e = y(i) - tree.predict_row(ds, i);
      base += e * e;
    }
    base /= static_cast<double>(oob.size());

    std::vector<Index> source(oob.size());
    for (int p = 0; p < num_features; ++p) {
      double increase = 0.0;
      for (int r = 0; r < options.repetitions; ++r) {
        Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(p),
                                           static_cast<std::uint64_t>(r)}));
        source = oob;
        rng.shuffle(std::span<Index>(source));
        if (options.observer) options.observer(static_cast<int>(k), p, r, oob, source);
        double mse = 0.0;
        for (std::size_t j = 0; j < oob.size(); ++j) {
          const Index row = oob[j];
          const Index from = source[j];
          const int leaf = tree.leaf_for([&](int q) { return q == p ? x(from, q) : x(row, q); });
          const double e = y(row) - tree.node(leaf).value;
          mse += e * e;
        }
        mse /= static_cast<double>(oob.size());
        increase += mse - base;
      }
      diffs[k * static_cast<std::size_t>(num_features) + static_cast<std::size_t>(p)] =
          increase / options.repetitions;
    }
  });

  PermutationImportance pi;
  pi.features = feature_names(ds.schema());
  pi.primary = options.primary;
  pi.baseline_mse_oob = oob_predict(f, ds).mse_oob;
  for (int k = 0; k < num_trees; ++k) {
    if (std::isnan(diffs[static_cast<std::size_t>(k * num_features)])) {
      ++pi.degenerate_trees;
    } else {
      ++pi.trees_used;
    }
  }
  if (pi.trees_used == 0) throw DataError("no tree has two or more out-of-bag rows");

  for (int p = 0; p < num_features; ++p) {
    double sum = 0.0;
    for (int k = 0; k < num_trees; ++k) {
      const double d = diffs[static_cast<std::size_t>(k * num_features + p)];
      if (!std::isnan(d)) sum += d;
    }
    const double mean = sum / pi.trees_used;
    double ss = 0.0;
    for (int k = 0; k < num_trees; ++k) {
      const double d = diffs[static_cast<std::size_t>(k * num_features + p)];
      if (!std::isnan(d)) ss += (d - mean) * (d - mean);
    }
    const double sd = pi.trees_used > 1 ? std::sqrt(ss / (pi.trees_used - 1)) : 0.0;
    const double se = sd / std::sqrt(static_cast<double>(pi.trees_used));
    pi.raw.push_back(mean);
    pi.standard_error.push_back(se);
    pi.normalized.push_back(se > 0.0 ? mean / se : 0.0);
    pi.percent.push_back(pi.baseline_mse_oob > 0.0 ? 100.0 * mean / pi.baseline_mse_oob : 0.0);
  }
  const auto& primary = pi.scores(options.primary);
  pi.ranking = order_by(num_features, [&](int a, int b) {
    return primary[static_cast<std::size_t>(a)] > primary[static_cast<std::size_t>(b)];
  });
  return pi;
}

std::vector<int> tree_minimal_depths(const RegressionTree& t, int num_features) {
  std::vector<int> depth(static_cast<std::size_t>(num_features), t.max_depth() + 1);
  for (const auto& n : t.nodes()) {
    if (n.is_leaf()) continue;
    auto& d = depth[static_cast<std::size_t>(n.rule.feature)];
    d = std::min(d, n.depth);
  }
  return depth;
}

double null_mean_minimal_depth(int tree_depth, int num_features) {
  if (num_features < 1) throw DataError("need at least one feature");
  if (tree_depth < 0) throw DataError("tree depth must be non-negative");
  const double miss = 1.0 - 1.0 / num_features;  // a node does not split on the feature
  double survive = 1.0;                          // feature absent from all shallower levels
  double mean = 0.0;
  for (int d = 0; d < tree_depth; ++d) {
    const double absent_here = std::pow(miss, std::ldexp(1.0, d));
    mean += d * survive * (1.0 - absent_here);
    survive *= absent_here;
  }
  return mean + tree_depth * survive;
}

double mean_minimal_depth_threshold(std::span<const int> tree_depths, int num_features) {
  if (tree_depths.empty()) throw DataError("need at least one tree");
  double sum = 0.0;
  for (int d : tree_depths) sum += null_mean_minimal_depth(d, num_features);
  return sum / static_cast<double>(tree_depths.size());
}

double mean_minimal_depth_threshold(const Forest& f) {
  std::vector<int> depths;
  for (const auto& t : f.trees()) depths.push_back(t.max_depth());
  return mean_minimal_depth_threshold(depths, f.schema().num_features());
}

MinimalDepthImportance minimal_depth(const Forest& f) {
  const int num_features = f.schema().num_features();
  MinimalDepthImportance md;
  md.features = feature_names(f.schema());
  md.mean_depth.assign(static_cast<std::size_t>(num_features), 0.0);
  for (const auto& t : f.trees()) {
    md.tree_max_depth.push_back(t.max_depth());
    const auto d = tree_minimal_depths(t, num_features);
    for (int p = 0; p < num_features; ++p) md.mean_depth[static_cast<std::size_t>(p)] += d[static_cast<std::size_t>(p)];
  }
  for (auto& v : md.mean_depth) v /= f.num_trees();
  md.threshold = mean_minimal_depth_threshold(md.tree_max_depth, num_features);
  for (double v : md.mean_depth) md.selected.push_back(v < md.threshold);
  md.ranking = order_by(num_features, [&](int a, int b) {
    return md.mean_depth[static_cast<std::size_t>(a)] < md.mean_depth[static_cast<std::size_t>(b)];
  });
  return md;
}

RankingTable rank_report(std::optional<PermutationImportance> pi, std::optional<MinimalDepthImportance> md) {
  if (!pi && !md) throw DataError("rank_report needs at least one importance result");
  if (pi && md && pi->features != md->features) throw DataError("importance results cover different features");
  RankingTable t;
  t.features = pi ? pi->features : md->features;
  const auto n = static_cast<int>(t.features.size());
  for (int i = 0; i < n; ++i) {
    RankingRow row;
    row.position = i + 1;
    if (pi) {
      const int p = pi->ranking[static_cast<std::size_t>(i)];
      row.permutation_feature = p;
      row.permutation_score = pi->scores(pi->primary)[static_cast<std::size_t>(p)];
    }
    if (md) {
      const int p = md->ranking[static_cast<std::size_t>(i)];
      row.depth_feature = p;
      row.depth_value = md->mean_depth[static_cast<std::size_t>(p)];
      row.depth_selected = md->selected[static_cast<std::size_t>(p)];
    }
    t.rows.push_back(row);
  }
  if (md) {
    t.threshold_position = static_cast<int>(std::count(md->selected.begin(), md->selected.end(), true));
  }
  t.permutation = std::move(pi);
  t.depth = std::move(md);
  return t;
}

void write_importance_csv(std::ostream& out, const RankingTable& t) {
  out << "feature,raw,normalized,percent,minimal_depth,selected\n";
  for (std::size_t p = 0; p < t.features.size(); ++p) {
    out << t.features[p] << ',';
    if (t.permutation) {
      out << format_number(t.permutation->raw[p]) << ',' << format_number(t.permutation->normalized[p]) << ','
          << format_number(t.permutation->percent[p]) << ',';
    } else {
      out << "NA,NA,NA,";
    }
    if (t.depth) {
      out << format_number(t.depth->mean_depth[p]) << ',' << (t.depth->selected[p] ? "true" : "false");
    } else {
      out << "NA,NA";
    }
    out << '\n';
  }
}

void write_ranking_csv(std::ostream& out, const RankingTable& t) {
  out << "position,permutation_feature,permutation_score,depth_feature,minimal_depth,selected\n";
  for (const auto& r : t.rows) {
    out << r.position << ',';
    if (r.permutation_feature) {
      out << t.features[static_cast<std::size_t>(*r.permutation_feature)] << ',' << format_number(*r.permutation_score)
          << ',';
    } else {
      out << "NA,NA,";
    }
    if (r.depth_feature) {
      out << t.features[static_cast<std::size_t>(*r.depth_feature)] << ',' << format_number(*r.depth_value) << ','
          << (*r.depth_selected ? "true" : "false");
    } else {
      out << "NA,NA,NA";
    }
    out << '\n';
  }
}

void write_ranking_text(std::ostream& out, const RankingTable& t) {
  char buf[256];
  if (t.permutation) {
    out << "Permutation importance (" << to_string(t.permutation->primary) << " increase in OOB MSE, "
        << t.permutation->trees_used << " trees";
    if (t.permutation->degenerate_trees > 0) out << ", " << t.permutation->degenerate_trees << " skipped";
    out << ")\n";
  }
  if (t.depth) out << "Minimal depth (threshold " << format_number(t.depth->threshold, 4) << ")\n";
  std::snprintf(buf, sizeof buf, "%4s  %-16s %12s    %-16s %8s\n", "rank", "permutation", "score", "minimal depth",
                "depth");
  out << buf;
  for (const auto& r : t.rows) {
    const std::string pf = r.permutation_feature ? t.features[static_cast<std::size_t>(*r.permutation_feature)] : "";
    const std::string ps = r.permutation_score ? format_number(*r.permutation_score, 4) : "";
    const std::string df = r.depth_feature ? t.features[static_cast<std::size_t>(*r.depth_feature)] : "";
    const std::string dv = r.depth_value ? format_number(*r.depth_value, 4) : "";
    std::snprintf(buf, sizeof buf, "%4d  %-16s %12s    %-16s %8s\n", r.position, pf.c_str(), ps.c_str(), df.c_str(),
                  dv.c_str());
    out << buf;
    if (t.threshold_position && r.position == *t.threshold_position) {
      out << "      " << std::string(58, '-') << " T* = " << format_number(t.depth->threshold, 4) << '\n';
    }
  }
}

}  // namespace catbond
