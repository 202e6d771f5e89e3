#include "catbond/error.hpp"
#include "catbond/stability.hpp"
#include "catbond/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace catbond;

namespace {

Dataset planted(std::size_t n, std::uint64_t seed) {
  auto cfg = synth::GeneratorConfig::planted();
  cfg.n = n;
  cfg.master_seed = seed;
  return synth::generate(cfg);
}

StabilityConfig quick(int iterations, std::uint64_t seed) {
  StabilityConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = seed;
  cfg.tune_mtry_per_half = false;
  cfg.forest.n_trees = 25;
  return cfg;
}

IterationRecord record(std::vector<int> a_perm, std::vector<int> b_perm) {
  IterationRecord r;
  r.a.permutation_ranking = std::move(a_perm);
  r.b.permutation_ranking = std::move(b_perm);
  r.a.depth_ranking = r.a.permutation_ranking;
  r.b.depth_ranking = r.a.permutation_ranking;
  return r;
}

}  // namespace

TEST(SplitHalf, SizesForOddAndEvenN) {
  auto h = split_half_indices(934, 1);
  EXPECT_EQ(h.a.size(), 467u);
  EXPECT_EQ(h.b.size(), 467u);
  h = split_half_indices(5, 1);
  EXPECT_EQ(h.a.size(), 3u);
  EXPECT_EQ(h.b.size(), 2u);
  EXPECT_THROW(split_half_indices(3, 1), DataError);
}

TEST(SplitHalf, DisjointCoverAndDeterministic) {
  const auto h = split_half_indices(101, 9);
  std::vector<Eigen::Index> all(h.a);
  all.insert(all.end(), h.b.begin(), h.b.end());
  std::sort(all.begin(), all.end());
  std::vector<Eigen::Index> expect(101);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
  EXPECT_TRUE(std::is_sorted(h.a.begin(), h.a.end()));
  const auto again = split_half_indices(101, 9);
  EXPECT_EQ(again.a, h.a);
  EXPECT_NE(split_half_indices(101, 10).a, h.a);
}

TEST(Summarize, AgreementAndFrequencyBookkeeping) {
  // Features 0..3. Iteration 0: identical. Iteration 1: top differs, bottom two swapped.
  std::vector<IterationRecord> its{record({0, 1, 2, 3}, {0, 1, 2, 3}), record({0, 1, 2, 3}, {1, 0, 3, 2})};
  const auto m = summarize_rankings(its, 4, true);
  EXPECT_TRUE(m.tracked);
  EXPECT_DOUBLE_EQ(m.agreement[0], 50.0);   // top
  EXPECT_DOUBLE_EQ(m.agreement[1], 50.0);   // second
  EXPECT_DOUBLE_EQ(m.agreement[2], 50.0);   // third
  EXPECT_DOUBLE_EQ(m.agreement[4], 50.0);   // bottom
  EXPECT_DOUBLE_EQ(m.agreement[5], 100.0);  // last two as a set
  // Top position: feature 0 in 3 of 4 half-samples, feature 1 in 1.
  EXPECT_DOUBLE_EQ(m.frequency[0][0], 75.0);
  EXPECT_DOUBLE_EQ(m.frequency[0][1], 25.0);
  for (const auto& row : m.frequency) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 100.0, 1e-9);
}

TEST(RunStability, IdenticalHalvesAgreeEverywhere) {
  const auto base = planted(120, 3);
  std::vector<Eigen::Index> twice(240);
  for (Eigen::Index i = 0; i < 240; ++i) twice[static_cast<std::size_t>(i)] = i % 120;
  const auto ds = base.subset(twice);
  auto cfg = quick(1, 4);
  cfg.shared_half_seeds = true;
  cfg.splitter = [](Eigen::Index n, std::uint64_t) {
    HalfIndices h;
    for (Eigen::Index i = 0; i < n; ++i) (i < n / 2 ? h.a : h.b).push_back(i);
    return h;
  };
  const auto r = run_stability(ds, cfg);
  EXPECT_EQ(r.mean_abs_delta_r2, 0.0);
  for (double a : r.permutation.agreement) EXPECT_EQ(a, 100.0);
  for (double a : r.minimal_depth.agreement) EXPECT_EQ(a, 100.0);
}

TEST(RunStability, OverlappingSplitIsRejected) {
  const auto ds = planted(60, 5);
  auto cfg = quick(1, 1);
  cfg.splitter = [](Eigen::Index n, std::uint64_t) {
    HalfIndices h;
    for (Eigen::Index i = 0; i < n / 2 + 1; ++i) h.a.push_back(i);
    for (Eigen::Index i = n / 2; i < n; ++i) h.b.push_back(i);
    return h;
  };
  EXPECT_THROW(run_stability(ds, cfg), InvariantError);
}

TEST(RunStability, RecordsAndSummaries) {
  const auto ds = planted(200, 6);
  auto cfg = quick(4, 7);
  const auto r = run_stability(ds, cfg);
  ASSERT_EQ(r.iterations.size(), 4u);
  double sum = 0, lo = 1e300, hi = 0;
  for (const auto& it : r.iterations) {
    EXPECT_EQ(it.a.size, 100);
    EXPECT_EQ(it.b.size, 100);
    std::vector<Eigen::Index> both;
    std::set_intersection(it.rows.a.begin(), it.rows.a.end(), it.rows.b.begin(), it.rows.b.end(),
                          std::back_inserter(both));
    EXPECT_TRUE(both.empty());
    EXPECT_EQ(it.a.permutation_ranking.size(), 9u);
    EXPECT_EQ(it.b.depth_ranking.size(), 9u);
    sum += it.abs_delta_r2();
    lo = std::min(lo, it.abs_delta_r2());
    hi = std::max(hi, it.abs_delta_r2());
  }
  EXPECT_NEAR(r.mean_abs_delta_r2, sum / 4, 1e-15);
  EXPECT_EQ(r.min_abs_delta_r2, lo);
  EXPECT_EQ(r.max_abs_delta_r2, hi);
  for (double a : r.permutation.agreement) {
    EXPECT_GE(a, 0);
    EXPECT_LE(a, 100);
    EXPECT_DOUBLE_EQ(std::fmod(a, 25.0), 0.0);
  }
  const auto again = run_stability(ds, [&] {
    auto c = cfg;
    c.threads = 3;
    return c;
  }());
  EXPECT_EQ(again.mean_abs_delta_r2, r.mean_abs_delta_r2);
  EXPECT_EQ(again.iterations[2].a.depth_ranking, r.iterations[2].a.depth_ranking);

  std::ostringstream its, agr, freq, sum_csv, text;
  write_iterations_csv(its, r);
  write_agreement_csv(agr, r);
  write_frequency_csv(freq, r, true);
  write_stability_summary_csv(sum_csv, r);
  write_stability_text(text, r);
  auto lines = [](const std::string& text) { return std::count(text.begin(), text.end(), '\n'); };
  EXPECT_EQ(lines(its.str()), 5);
  EXPECT_EQ(agr.str().substr(0, agr.str().find('\n')), "position,permutation,minimal_depth");
  EXPECT_EQ(lines(freq.str()), 10);
  EXPECT_NE(sum_csv.str().find("mean_abs_delta_r2"), std::string::npos);
}

TEST(RunStability, TunedHalvesPickGridValues) {
  const auto ds = planted(120, 8);
  auto cfg = quick(1, 2);
  cfg.tune_mtry_per_half = true;
  cfg.mtry_grid = {2, 4};
  cfg.tuning_folds = 3;
  cfg.track_permutation = false;
  const auto r = run_stability(ds, cfg);
  const auto& it = r.iterations.front();
  EXPECT_TRUE(it.a.mtry == 2 || it.a.mtry == 4);
  EXPECT_TRUE(it.a.permutation_ranking.empty());
  EXPECT_FALSE(r.permutation.tracked);
}

TEST(StabilityConfig, Validation) {
  StabilityConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), DataError);
  cfg.iterations = 1;
  cfg.track_permutation = cfg.track_minimal_depth = false;
  EXPECT_THROW(cfg.validate(), DataError);
}
