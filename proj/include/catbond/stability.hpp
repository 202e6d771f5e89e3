#pragma once

// Split-half stability: repeated disjoint halves, a forest per half, and
// agreement of accuracy and importance rankings between the halves.

#include "catbond/importance.hpp"
#include "catbond/tuning.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace catbond {

struct HalfIndices {
  std::vector<Eigen::Index> a;  // ceil(N/2) rows
  std::vector<Eigen::Index> b;  // the rest
};

HalfIndices split_half_indices(Eigen::Index n, std::uint64_t seed);
std::pair<Dataset, Dataset> split_half(const Dataset& ds, std::uint64_t seed);

struct StabilityConfig {
  int iterations = 100;
  std::uint64_t seed = 0;
  bool tune_mtry_per_half = true;
  bool track_permutation = true;
  bool track_minimal_depth = true;
  ForestParams forest;       // n_trees and node_size for every half; mtry when not tuning
  std::vector<int> mtry_grid;  // empty: 1..P
  int tuning_folds = 5;
  PermutationScore permutation_score = PermutationScore::Percent;
  int permutation_repetitions = 1;
  int threads = 1;
  // Replaces the random split, e.g. to engineer identical halves in tests.
  std::function<HalfIndices(Eigen::Index, std::uint64_t)> splitter;
  // Give both halves of an iteration the same seeds.
  bool shared_half_seeds = false;

  void validate() const;
};

struct HalfResult {
  Eigen::Index size = 0;
  int mtry = 0;
  double r2_oob = 0.0;
  std::vector<int> permutation_ranking;  // empty if not tracked
  std::vector<int> depth_ranking;
  bool permutation_tie = false;  // some adjacent ranked scores are exactly equal
  bool depth_tie = false;
};

// Fits (and optionally tunes) one half and ranks its features.
HalfResult evaluate_half(const Dataset& half, const StabilityConfig& cfg, std::uint64_t seed);

struct IterationRecord {
  int iteration = 0;
  HalfIndices rows;
  HalfResult a;
  HalfResult b;
  double abs_delta_r2() const { return std::abs(a.r2_oob - b.r2_oob); }
};

enum class RankPosition { Top, Second, Third, SecondFromBottom, Bottom, LastTwo };
inline constexpr std::array<RankPosition, 6> kAllPositions{RankPosition::Top,    RankPosition::Second,
                                                           RankPosition::Third,  RankPosition::SecondFromBottom,
                                                           RankPosition::Bottom, RankPosition::LastTwo};
// Single positions with one feature per half-sample (frequency-table rows).
inline constexpr std::array<RankPosition, 5> kSinglePositions{RankPosition::Top, RankPosition::Second,
                                                              RankPosition::Third, RankPosition::SecondFromBottom,
                                                              RankPosition::Bottom};
std::string to_string(RankPosition p);

struct MethodStability {
  bool tracked = false;
  std::array<double, 6> agreement{};  // percent of iterations, indexed like kAllPositions
  // frequency[position][feature]: percent of the 2 * iterations half-samples
  // that put the feature at that position (kSinglePositions order).
  std::array<std::vector<double>, 5> frequency;
  int tie_half_samples = 0;
};

struct StabilityReport {
  std::vector<std::string> features;
  std::vector<IterationRecord> iterations;
  double mean_abs_delta_r2 = 0.0;
  double min_abs_delta_r2 = 0.0;
  double max_abs_delta_r2 = 0.0;
  MethodStability permutation;
  MethodStability minimal_depth;
};

StabilityReport run_stability(const Dataset& ds, const StabilityConfig& cfg);

// Agreement and frequency statistics from iteration records.
MethodStability summarize_rankings(const std::vector<IterationRecord>& iterations, int num_features,
                                   bool permutation);

void write_iterations_csv(std::ostream& out, const StabilityReport& r);
void write_agreement_csv(std::ostream& out, const StabilityReport& r);
void write_frequency_csv(std::ostream& out, const StabilityReport& r, bool permutation);
void write_stability_summary_csv(std::ostream& out, const StabilityReport& r);
void write_stability_text(std::ostream& out, const StabilityReport& r);

}  // namespace catbond
