#include "catbond/cart.hpp"

#include "catbond/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace catbond {

using Eigen::Index;

void TreeParams::validate(int num_features) const {
  if (mtry < 1 || mtry > num_features) {
    throw DataError("mtry must lie in [1, " + std::to_string(num_features) + "], got " + std::to_string(mtry));
  }
  if (node_size < 1) throw DataError("node_size must be >= 1");
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes, std::vector<int> inbag)
    : nodes_(std::move(nodes)), inbag_(std::move(inbag)) {
  if (nodes_.empty()) throw InvariantError("tree has no nodes");
  if (nodes_[0].depth != 0) throw InvariantError("root depth must be 0");
  std::vector<int> parents(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    max_depth_ = std::max(max_depth_, n.depth);
    if (!std::isfinite(n.value)) throw InvariantError("node value is not finite");
    if (n.is_leaf()) {
      if (n.count < 1) throw InvariantError("leaf holds no training rows");
      continue;
    }
    for (int c : {n.left, n.right}) {
      if (c <= 0 || c >= static_cast<int>(nodes_.size()) || c == static_cast<int>(i)) {
        throw InvariantError("child index out of range");
      }
      if (nodes_[static_cast<std::size_t>(c)].depth != n.depth + 1) throw InvariantError("child depth mismatch");
      ++parents[static_cast<std::size_t>(c)];
    }
    if (n.left == n.right) throw InvariantError("internal node needs two distinct children");
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (parents[i] != 1) throw InvariantError("node " + std::to_string(i) + " is not referenced exactly once");
  }
  for (int m : inbag_) {
    if (m < 0) throw InvariantError("negative in-bag multiplicity");
  }
}

int RegressionTree::num_leaves() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

constexpr int kMaxExhaustiveLevels = 16;

// Split search over one node's observations. `x`, `wt` and `yc` are parallel
// arrays: feature value, weight, response centered on the node mean.
class SplitSearch {
 public:
  std::optional<SplitCandidate> run(const Feature& f, int p, std::span<const double> x, std::span<const double> wt,
                                    std::span<const double> yc, std::span<const Index> order_key, double node_rss) {
    return f.is_categorical() ? categorical(f, p, x, wt, yc, node_rss) : continuous(p, x, wt, yc, order_key, node_rss);
  }

 private:
  struct Entry {
    double x;
    double w;
    double wy;
    Index key;
  };

  std::optional<SplitCandidate> continuous(int p, std::span<const double> x, std::span<const double> wt,
                                           std::span<const double> yc, std::span<const Index> key, double node_rss) {
    const std::size_t n = x.size();
    entries_.resize(n);
    double total_w = 0.0, total_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      entries_[i] = {x[i], wt[i], wt[i] * yc[i], key[i]};
      total_w += wt[i];
      total_s += wt[i] * yc[i];
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.x < b.x || (a.x == b.x && a.key < b.key); });
    if (entries_.front().x == entries_.back().x) return std::nullopt;

    std::optional<SplitCandidate> best;
    const double tol = kRssTieTolerance * node_rss;
    double wl = 0.0, sl = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      wl += entries_[i].w;
      sl += entries_[i].wy;
      if (entries_[i].x == entries_[i + 1].x) continue;
      const double wr = total_w - wl;
      const double sr = total_s - sl;
      const double rss = node_rss - sl * sl / wl - sr * sr / wr;
      if (!best || rss < best->rss_after - tol) {
        const double lo = entries_[i].x, hi = entries_[i + 1].x;
        double mid = lo + (hi - lo) / 2.0;
        if (mid >= hi) mid = lo;
        best = SplitCandidate{SplitRule{p, false, mid, 0}, rss};
      }
    }
    return best;
  }

  std::optional<SplitCandidate> categorical(const Feature& f, int p, std::span<const double> x,
                                            std::span<const double> wt, std::span<const double> yc,
                                            double node_rss) {
    const int levels = f.num_levels();
    std::array<double, 64> lw{}, ls{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto l = static_cast<std::size_t>(x[i]);
      lw[l] += wt[i];
      ls[l] += wt[i] * yc[i];
    }
    std::array<int, 64> present{};
    int m = 0;
    for (int l = 0; l < levels; ++l) {
      if (lw[static_cast<std::size_t>(l)] > 0.0) present[static_cast<std::size_t>(m++)] = l;
    }
    if (m < 2) return std::nullopt;

    double total_w = 0.0, total_s = 0.0;
    for (int j = 0; j < m; ++j) {
      total_w += lw[static_cast<std::size_t>(present[static_cast<std::size_t>(j)])];
      total_s += ls[static_cast<std::size_t>(present[static_cast<std::size_t>(j)])];
    }

    std::optional<SplitCandidate> best;
    double best_wl = 0.0;
    const double tol = kRssTieTolerance * node_rss;
    // The highest present level always goes right, so each partition is visited once.
    const std::uint64_t limit = std::uint64_t{1} << (m - 1);
    for (std::uint64_t local = 1; local < limit; ++local) {
      double wl = 0.0, sl = 0.0;
      std::uint64_t mask = 0;
      for (int j = 0; j < m - 1; ++j) {
        if (((local >> j) & 1U) == 0) continue;
        const auto l = static_cast<std::size_t>(present[static_cast<std::size_t>(j)]);
        wl += lw[l];
        sl += ls[l];
        mask |= std::uint64_t{1} << l;
      }
      const double wr = total_w - wl;
      const double sr = total_s - sl;
      const double rss = node_rss - sl * sl / wl - sr * sr / wr;
      if (!best || rss < best->rss_after - tol) {
        best = SplitCandidate{SplitRule{p, true, 0.0, mask}, rss};
        best_wl = wl;
      }
    }
    const bool absent_left = best_wl >= total_w - best_wl;
    if (absent_left) {
      for (int l = 0; l < levels; ++l) {
        if (lw[static_cast<std::size_t>(l)] == 0.0) best->rule.left_levels |= std::uint64_t{1} << l;
      }
    }
    return best;
  }

  std::vector<Entry> entries_;
};

struct NodeStats {
  double weight = 0.0;
  double mean = 0.0;
  double rss = 0.0;
  bool pure = true;
};

}  // namespace

std::optional<SplitCandidate> best_split(const Feature& feature, int feature_index, std::span<const double> x,
                                         std::span<const double> y, std::span<const double> weights) {
  if (x.size() != y.size() || x.size() != weights.size()) throw DataError("best_split: length mismatch");
  if (x.size() < 2) return std::nullopt;
  double w = 0.0, s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    w += weights[i];
    s += weights[i] * y[i];
  }
  const double mean = s / w;
  std::vector<double> yc(y.size());
  double rss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    yc[i] = y[i] - mean;
    rss += weights[i] * yc[i] * yc[i];
  }
  std::vector<Index> key(x.size());
  std::iota(key.begin(), key.end(), Index{0});
  SplitSearch search;
  return search.run(feature, feature_index, x, weights, yc, key, rss);
}

RegressionTree fit_tree(const Dataset& ds, std::vector<int> inbag, const TreeParams& params, Rng& rng) {
  const int num_features = ds.num_features();
  params.validate(num_features);
  for (const auto& f : ds.schema().features()) {
    if (f.is_categorical() && f.num_levels() > kMaxExhaustiveLevels) {
      throw DataError("feature '" + f.name + "' has more than 16 levels");
    }
  }
  const Index n = ds.size();
  if (static_cast<Index>(inbag.size()) != n) throw DataError("in-bag vector length differs from dataset size");
  long long total = 0;
  for (int m : inbag) {
    if (m < 0) throw DataError("negative in-bag multiplicity");
    total += m;
  }
  if (total != n) throw DataError("in-bag multiplicities must sum to the dataset size");

  const auto& xm = ds.features();
  const double* y = ds.response().data();

  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (inbag[static_cast<std::size_t>(i)] > 0) rows.push_back(i);
  }

  struct Pending {
    int node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<TreeNode> nodes(1);
  std::vector<Pending> queue{{0, 0, rows.size()}};

  SplitSearch search;
  std::vector<double> xs, ws, ycs;
  std::vector<Index> keys;

  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto [id, begin, end] = queue[head];
    const std::span<const Index> slice(rows.data() + begin, end - begin);

    NodeStats st;
    double s = 0.0;
    for (Index r : slice) {
      const double w = inbag[static_cast<std::size_t>(r)];
      st.weight += w;
      s += w * y[r];
      if (y[r] != y[slice.front()]) st.pure = false;
    }
    st.mean = s / st.weight;
    for (Index r : slice) {
      const double d = y[r] - st.mean;
      st.rss += inbag[static_cast<std::size_t>(r)] * d * d;
    }
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.value = st.mean;
    node.count = static_cast<int>(st.weight);
    const int depth = node.depth;

    const bool depth_capped = params.max_depth >= 0 && depth >= params.max_depth;
    if (st.pure || node.count <= params.node_size || depth_capped || slice.size() < 2) continue;

    xs.resize(slice.size());
    ws.resize(slice.size());
    ycs.resize(slice.size());
    keys.assign(slice.begin(), slice.end());
    for (std::size_t i = 0; i < slice.size(); ++i) {
      ws[i] = inbag[static_cast<std::size_t>(slice[i])];
      ycs[i] = y[slice[i]] - st.mean;
    }

    auto candidates = rng.sample_without_replacement(num_features, params.mtry);
    std::sort(candidates.begin(), candidates.end());
    std::optional<SplitCandidate> best;
    const double tol = kRssTieTolerance * st.rss;
    for (int p : candidates) {
      for (std::size_t i = 0; i < slice.size(); ++i) xs[i] = xm(slice[i], p);
      auto c = search.run(ds.schema().feature(p), p, xs, ws, ycs, keys, st.rss);
      if (c && (!best || c->rss_after < best->rss_after - tol)) best = c;
    }
    if (!best || !(best->rss_after < st.rss - tol)) continue;

    const auto rule = best->rule;
    const auto mid = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                           rows.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](Index r) { return rule.goes_left(xm(r, rule.feature)); });
    const auto split_at = static_cast<std::size_t>(mid - rows.begin());
    if (split_at == begin || split_at == end) throw InvariantError("accepted split left a child empty");

    const int left = static_cast<int>(nodes.size());
    nodes[static_cast<std::size_t>(id)].rule = rule;
    nodes[static_cast<std::size_t>(id)].left = left;
    nodes[static_cast<std::size_t>(id)].right = left + 1;
    TreeNode child;
    child.depth = depth + 1;
    nodes.push_back(child);
    nodes.push_back(child);
    queue.push_back({left, begin, split_at});
    queue.push_back({left + 1, split_at, end});
  }
  return RegressionTree(std::move(nodes), std::move(inbag));
}

RegressionTree fit_tree(const Dataset& ds, std::vector<int> inbag, const TreeParams& params) {
  Rng rng(params.seed);
  return fit_tree(ds, std::move(inbag), params, rng);
}

}  // namespace catbond
