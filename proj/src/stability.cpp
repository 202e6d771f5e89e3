#include "catbond/stability.hpp"

#include "catbond/error.hpp"
#include "catbond/format.hpp"
#include "catbond/parallel.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <ostream>

namespace catbond {

using Eigen::Index;

HalfIndices split_half_indices(Index n, std::uint64_t seed) {
  if (n < 4) throw DataError("split-half needs at least 4 rows");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, {0x68616c66ULL}));
  rng.shuffle(std::span<Index>(order));
  const auto na = static_cast<std::size_t>((n + 1) / 2);
  HalfIndices h;
  h.a.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(na));
  h.b.assign(order.begin() + static_cast<std::ptrdiff_t>(na), order.end());
  std::sort(h.a.begin(), h.a.end());
  std::sort(h.b.begin(), h.b.end());
  return h;
}

std::pair<Dataset, Dataset> split_half(const Dataset& ds, std::uint64_t seed) {
  const auto h = split_half_indices(ds.size(), seed);
  return {ds.subset(h.a), ds.subset(h.b)};
}

void StabilityConfig::validate() const {
  if (iterations < 1) throw DataError("iterations must be >= 1");
  if (!track_permutation && !track_minimal_depth) throw DataError("track at least one importance method");
}

std::string to_string(RankPosition p) {
  switch (p) {
    case RankPosition::Top:
      return "top";
    case RankPosition::Second:
      return "second";
    case RankPosition::Third:
      return "third";
    case RankPosition::SecondFromBottom:
      return "second_from_bottom";
    case RankPosition::Bottom:
      return "bottom";
    case RankPosition::LastTwo:
      return "last_two";
  }
  return "";
}

namespace {

bool has_adjacent_tie(const std::vector<int>& ranking, const std::vector<double>& score) {
  for (std::size_t i = 1; i < ranking.size(); ++i) {
    if (score[static_cast<std::size_t>(ranking[i])] == score[static_cast<std::size_t>(ranking[i - 1])]) return true;
  }
  return false;
}

// Ranking index for a single position, or nullopt if P is too small.
std::optional<std::size_t> slot(RankPosition pos, std::size_t p) {
  switch (pos) {
    case RankPosition::Top:
      return 0;
    case RankPosition::Second:
      return p >= 2 ? std::optional<std::size_t>(1) : std::nullopt;
    case RankPosition::Third:
      return p >= 3 ? std::optional<std::size_t>(2) : std::nullopt;
    case RankPosition::SecondFromBottom:
      return p >= 2 ? std::optional<std::size_t>(p - 2) : std::nullopt;
    case RankPosition::Bottom:
      return p - 1;
    case RankPosition::LastTwo:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

HalfResult evaluate_half(const Dataset& half, const StabilityConfig& cfg, std::uint64_t seed) {
  HalfResult r;
  r.size = half.size();
  auto params = cfg.forest;
  if (cfg.tune_mtry_per_half) {
    MtrySearchOptions opt;
    opt.grid = cfg.mtry_grid;
    opt.folds = cfg.tuning_folds;
    opt.fixed = cfg.forest;
    opt.seed = derive_seed(seed, {0x74756e65ULL});
    params.mtry = grid_search_mtry(half, opt).chosen_mtry;
  }
  params.master_seed = derive_seed(seed, {0x666f72657374ULL});
  r.mtry = params.mtry;
  const auto forest = fit_forest(half, params, 1);
  r.r2_oob = oob_predict(forest, half).r2_oob;
  if (cfg.track_permutation) {
    PermutationOptions opt;
    opt.seed = derive_seed(seed, {0x7065726dULL});
    opt.repetitions = cfg.permutation_repetitions;
    opt.primary = cfg.permutation_score;
    const auto pi = permutation_importance(forest, half, opt);
    r.permutation_ranking = pi.ranking;
    r.permutation_tie = has_adjacent_tie(pi.ranking, pi.scores(cfg.permutation_score));
  }
  if (cfg.track_minimal_depth) {
    const auto md = minimal_depth(forest);
    r.depth_ranking = md.ranking;
    r.depth_tie = has_adjacent_tie(md.ranking, md.mean_depth);
  }
  return r;
}

MethodStability summarize_rankings(const std::vector<IterationRecord>& iterations, int num_features,
                                   bool permutation) {
  MethodStability m;
  m.tracked = true;
  const auto p = static_cast<std::size_t>(num_features);
  for (auto& f : m.frequency) f.assign(p, 0.0);
  std::array<int, 6> agree{};
  for (const auto& it : iterations) {
    const auto& ra = permutation ? it.a.permutation_ranking : it.a.depth_ranking;
    const auto& rb = permutation ? it.b.permutation_ranking : it.b.depth_ranking;
    if (ra.size() != p || rb.size() != p) throw InvariantError("ranking length differs from feature count");
    m.tie_half_samples += static_cast<int>(permutation ? it.a.permutation_tie : it.a.depth_tie);
    m.tie_half_samples += static_cast<int>(permutation ? it.b.permutation_tie : it.b.depth_tie);
    for (std::size_t k = 0; k < kAllPositions.size(); ++k) {
      const auto pos = kAllPositions[k];
      if (pos == RankPosition::LastTwo) {
        if (p < 2) continue;
        std::array<int, 2> sa{ra[p - 1], ra[p - 2]}, sb{rb[p - 1], rb[p - 2]};
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        agree[k] += static_cast<int>(sa == sb);
      } else if (const auto s = slot(pos, p)) {
        agree[k] += static_cast<int>(ra[*s] == rb[*s]);
      }
    }
    for (std::size_t k = 0; k < kSinglePositions.size(); ++k) {
      if (const auto s = slot(kSinglePositions[k], p)) {
        m.frequency[k][static_cast<std::size_t>(ra[*s])] += 1.0;
        m.frequency[k][static_cast<std::size_t>(rb[*s])] += 1.0;
      }
    }
  }
  const auto n = static_cast<double>(iterations.size());
  for (std::size_t k = 0; k < agree.size(); ++k) m.agreement[k] = 100.0 * agree[k] / n;
  for (auto& f : m.frequency) {
    for (auto& v : f) v = 100.0 * v / (2.0 * n);
  }
  return m;
}

StabilityReport run_stability(const Dataset& ds, const StabilityConfig& cfg) {
  cfg.validate();
  StabilityReport report;
  for (const auto& f : ds.schema().features()) report.features.push_back(f.name);
  report.iterations.resize(static_cast<std::size_t>(cfg.iterations));

  parallel_for(report.iterations.size(), cfg.threads, [&](std::size_t i) {
    const auto iter_seed = derive_seed(cfg.seed, {0x69746572ULL, i});
    auto& rec = report.iterations[i];
    rec.iteration = static_cast<int>(i) + 1;
    rec.rows = cfg.splitter ? cfg.splitter(ds.size(), iter_seed) : split_half_indices(ds.size(), iter_seed);
    std::vector<bool> in_a(static_cast<std::size_t>(ds.size()), false);
    for (Index r : rec.rows.a) in_a[static_cast<std::size_t>(r)] = true;
    for (Index r : rec.rows.b) {
      if (in_a[static_cast<std::size_t>(r)]) throw InvariantError("split halves overlap");
    }
    const auto seed_a = derive_seed(iter_seed, {0xaULL});
    const auto seed_b = cfg.shared_half_seeds ? seed_a : derive_seed(iter_seed, {0xbULL});
    rec.a = evaluate_half(ds.subset(rec.rows.a), cfg, seed_a);
    rec.b = evaluate_half(ds.subset(rec.rows.b), cfg, seed_b);
  });

  double sum = 0.0;
  report.min_abs_delta_r2 = std::numeric_limits<double>::infinity();
  report.max_abs_delta_r2 = 0.0;
  for (const auto& it : report.iterations) {
    const double d = it.abs_delta_r2();
    sum += d;
    report.min_abs_delta_r2 = std::min(report.min_abs_delta_r2, d);
    report.max_abs_delta_r2 = std::max(report.max_abs_delta_r2, d);
  }
  report.mean_abs_delta_r2 = sum / static_cast<double>(report.iterations.size());
  if (cfg.track_permutation) {
    report.permutation = summarize_rankings(report.iterations, ds.num_features(), true);
  }
  if (cfg.track_minimal_depth) {
    report.minimal_depth = summarize_rankings(report.iterations, ds.num_features(), false);
  }
  return report;
}

namespace {

std::string ranking_text(const std::vector<int>& ranking, const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (i > 0) s += ';';
    s += names[static_cast<std::size_t>(ranking[i])];
  }
  return s;
}

}  // namespace

void write_iterations_csv(std::ostream& out, const StabilityReport& r) {
  out << "iteration,size_a,size_b,mtry_a,mtry_b,r2_oob_a,r2_oob_b,abs_delta_r2,permutation_ranking_a,"
         "permutation_ranking_b,depth_ranking_a,depth_ranking_b\n";
  for (const auto& it : r.iterations) {
    out << it.iteration << ',' << it.a.size << ',' << it.b.size << ',' << it.a.mtry << ',' << it.b.mtry << ','
        << format_number(it.a.r2_oob) << ',' << format_number(it.b.r2_oob) << ',' << format_number(it.abs_delta_r2())
        << ',' << ranking_text(it.a.permutation_ranking, r.features) << ','
        << ranking_text(it.b.permutation_ranking, r.features) << ',' << ranking_text(it.a.depth_ranking, r.features)
        << ',' << ranking_text(it.b.depth_ranking, r.features) << '\n';
  }
}

void write_agreement_csv(std::ostream& out, const StabilityReport& r) {
  out << "position,permutation,minimal_depth\n";
  for (std::size_t k = 0; k < kAllPositions.size(); ++k) {
    out << to_string(kAllPositions[k]) << ','
        << (r.permutation.tracked ? format_number(r.permutation.agreement[k]) : "NA") << ','
        << (r.minimal_depth.tracked ? format_number(r.minimal_depth.agreement[k]) : "NA") << '\n';
  }
}

void write_frequency_csv(std::ostream& out, const StabilityReport& r, bool permutation) {
  const auto& m = permutation ? r.permutation : r.minimal_depth;
  out << "feature";
  for (auto pos : kSinglePositions) out << ',' << to_string(pos);
  out << '\n';
  if (!m.tracked) return;
  for (std::size_t p = 0; p < r.features.size(); ++p) {
    out << r.features[p];
    for (const auto& f : m.frequency) out << ',' << format_number(f[p]);
    out << '\n';
  }
}

void write_stability_summary_csv(std::ostream& out, const StabilityReport& r) {
  out << "metric,value\n";
  out << "iterations," << r.iterations.size() << '\n';
  out << "mean_abs_delta_r2," << format_number(r.mean_abs_delta_r2) << '\n';
  out << "min_abs_delta_r2," << format_number(r.min_abs_delta_r2) << '\n';
  out << "max_abs_delta_r2," << format_number(r.max_abs_delta_r2) << '\n';
  for (const auto* m : {&r.permutation, &r.minimal_depth}) {
    if (!m->tracked) continue;
    const std::string prefix = m == &r.permutation ? "permutation_" : "minimal_depth_";
    for (std::size_t k = 0; k < kAllPositions.size(); ++k) {
      out << prefix << to_string(kAllPositions[k]) << "_agreement," << format_number(m->agreement[k]) << '\n';
    }
    out << prefix << "tie_half_samples," << m->tie_half_samples << '\n';
  }
}

void write_stability_text(std::ostream& out, const StabilityReport& r) {
  out << "Split-half stability over " << r.iterations.size() << " iterations\n";
  out << "  |delta R2_OOB| mean " << format_number(100.0 * r.mean_abs_delta_r2, 4) << " pp, min "
      << format_number(100.0 * r.min_abs_delta_r2, 4) << " pp, max " << format_number(100.0 * r.max_abs_delta_r2, 4)
      << " pp\n";
  out << "  ranking agreement (% of iterations):\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "    %-20s %12s %14s\n", "position", "permutation", "minimal depth");
  out << buf;
  for (std::size_t k = 0; k < kAllPositions.size(); ++k) {
    const auto pv = r.permutation.tracked ? format_number(r.permutation.agreement[k], 4) : "-";
    const auto dv = r.minimal_depth.tracked ? format_number(r.minimal_depth.agreement[k], 4) : "-";
    std::snprintf(buf, sizeof buf, "    %-20s %12s %14s\n", to_string(kAllPositions[k]).c_str(), pv.c_str(),
                  dv.c_str());
    out << buf;
  }
  if (r.permutation.tracked || r.minimal_depth.tracked) {
    out << "  half-samples with tied scores: permutation " << r.permutation.tie_half_samples << ", minimal depth "
        << r.minimal_depth.tie_half_samples << '\n';
  }
}

}  // namespace catbond
