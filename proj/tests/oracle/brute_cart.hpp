#pragma once

// Exhaustive reference CART used to check the production tree builder.
// Every node enumerates every feature, every midpoint and every level subset,
// and computes child RSS directly from the member rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace oracle {

struct Column {
  bool categorical = false;
  int levels = 0;
  std::vector<double> x;
};

struct Problem {
  std::vector<Column> columns;
  std::vector<double> y;
  std::vector<int> weight;  // bootstrap multiplicities
  int node_size = 5;
  int max_depth = -1;
  double tie_tolerance = 1e-12;
};

struct Node {
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::uint64_t left_levels = 0;
  double value = 0.0;
  int count = 0;
  int depth = 0;
  std::unique_ptr<Node> left, right;
};

namespace detail {

struct Moments {
  double w = 0.0, mean = 0.0, rss = 0.0;
};

inline Moments moments(const Problem& pb, const std::vector<int>& rows) {
  Moments m;
  double s = 0.0;
  for (int r : rows) {
    m.w += pb.weight[r];
    s += pb.weight[r] * pb.y[r];
  }
  m.mean = s / m.w;
  for (int r : rows) m.rss += pb.weight[r] * (pb.y[r] - m.mean) * (pb.y[r] - m.mean);
  return m;
}

struct Candidate {
  int feature;
  bool categorical;
  double threshold;
  std::uint64_t mask;
  double rss;
};

inline bool goes_left(const Column& c, double v, double threshold, std::uint64_t mask) {
  return c.categorical ? ((mask >> static_cast<int>(v)) & 1U) != 0 : v <= threshold;
}

inline std::optional<double> split_rss(const Problem& pb, const std::vector<int>& rows, const Column& c, double threshold,
                                       std::uint64_t mask) {
  std::vector<int> l, r;
  for (int i : rows) (goes_left(c, c.x[i], threshold, mask) ? l : r).push_back(i);
  if (l.empty() || r.empty()) return std::nullopt;
  return moments(pb, l).rss + moments(pb, r).rss;
}

inline std::unique_ptr<Node> grow(const Problem& pb, const std::vector<int>& rows, int depth) {
  auto node = std::make_unique<Node>();
  const auto m = moments(pb, rows);
  node->value = m.mean;
  node->count = static_cast<int>(m.w);
  node->depth = depth;
  bool pure = true;
  for (int r : rows) pure = pure && pb.y[r] == pb.y[rows.front()];
  if (pure || node->count <= pb.node_size || (pb.max_depth >= 0 && depth >= pb.max_depth) || rows.size() < 2) {
    return node;
  }
  const double tol = pb.tie_tolerance * m.rss;
  std::optional<Candidate> best;
  auto offer = [&](Candidate c) {
    if (!best || c.rss < best->rss - tol) best = c;
  };
  for (int p = 0; p < static_cast<int>(pb.columns.size()); ++p) {
    const auto& c = pb.columns[static_cast<std::size_t>(p)];
    std::optional<Candidate> best_here;
    if (!c.categorical) {
      std::vector<double> v;
      for (int r : rows) v.push_back(c.x[r]);
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        const double t = 0.5 * (v[i] + v[i + 1]);
        const auto rss = split_rss(pb, rows, c, t, 0);
        if (rss && (!best_here || *rss < best_here->rss - tol)) best_here = Candidate{p, false, t, 0, *rss};
      }
    } else {
      std::vector<int> present;
      for (int l = 0; l < c.levels; ++l) {
        for (int r : rows) {
          if (static_cast<int>(c.x[r]) == l) {
            present.push_back(l);
            break;
          }
        }
      }
      // Masks over present levels, highest present level kept on the right.
      for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << c.levels); ++mask) {
        bool ok = (mask >> present.back() & 1U) == 0;
        for (int l = 0; l < c.levels && ok; ++l) {
          const bool is_present = std::find(present.begin(), present.end(), l) != present.end();
          if (!is_present && ((mask >> l) & 1U)) ok = false;
        }
        if (!ok) continue;
        const auto rss = split_rss(pb, rows, c, 0.0, mask);
        if (rss && (!best_here || *rss < best_here->rss - tol)) best_here = Candidate{p, true, 0.0, mask, *rss};
      }
      if (best_here) {
        // Unseen levels follow the heavier side, left on ties.
        double wl = 0.0, wr = 0.0;
        for (int r : rows) ((best_here->mask >> static_cast<int>(c.x[r])) & 1U ? wl : wr) += pb.weight[r];
        if (wl >= wr) {
          for (int l = 0; l < c.levels; ++l) {
            if (std::find(present.begin(), present.end(), l) == present.end()) best_here->mask |= std::uint64_t{1} << l;
          }
        }
      }
    }
    if (best_here) offer(*best_here);
  }
  if (!best || !(best->rss < m.rss - tol)) return node;
  node->feature = best->feature;
  node->categorical = best->categorical;
  node->threshold = best->threshold;
  node->left_levels = best->mask;
  const auto& c = pb.columns[static_cast<std::size_t>(best->feature)];
  std::vector<int> l, r;
  for (int i : rows) (goes_left(c, c.x[i], best->threshold, best->mask) ? l : r).push_back(i);
  node->left = grow(pb, l, depth + 1);
  node->right = grow(pb, r, depth + 1);
  return node;
}

}  // namespace detail

inline std::unique_ptr<Node> fit(const Problem& pb) {
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(pb.y.size()); ++i) {
    if (pb.weight[static_cast<std::size_t>(i)] > 0) rows.push_back(i);
  }
  return detail::grow(pb, rows, 0);
}

}  // namespace oracle
