#pragma once

// Synthetic bond datasets calibrated to published marginal statistics, with a
// known spread-generating function.

#include "catbond/rng.hpp"
#include "catbond/schema.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace catbond::synth {

// Piecewise-linear quantile function through (prob, value) anchors.
struct QuantileAnchors {
  std::vector<double> probs;   // strictly increasing, from 0 to 1
  std::vector<double> values;  // strictly increasing

  double quantile(double u) const;
  double cdf(double x) const;
  void validate(const std::string& what) const;
};

struct MixtureComponent {
  double weight = 1.0;
  QuantileAnchors anchors;
};

// Marginal of one continuous column; usually a single component.
struct ContinuousTarget {
  std::vector<MixtureComponent> components;

  double cdf(double x) const;
  double sample(Rng& rng) const;
  void validate(const std::string& what) const;
};

enum class GroundTruthKind { Linear, Nonlinear };

struct LinearGroundTruth {
  double intercept = 0.0;
  double ap = 0.0;
  double el = 0.0;
  double size = 0.0;
  double term = 0.0;
  std::array<double, 6> diversifier_offset{};  // canonical diversifier level order
};

// Default nonlinear spread surface:
//   spread = 4.0 + 0.6 el + 0.1 ap - 1.5 |ln(size / 130)|
//            + diversifier offset {APAC 0.5, Europe -0.5, MultiPeril 0, NAQuake 0.8, NAWind 1.5, SAQuake 1.0}
//            + 10.0 when trigger = indemnity and coverage = aggregate
// The size term is a concave tent in log(size) peaking at 130.
struct NonlinearGroundTruth {
  static constexpr double kIntercept = 4.0;
  static constexpr double kEl = 0.6;
  static constexpr double kAp = 0.1;
  static constexpr double kLogSizeSlope = 1.5;
  static constexpr double kSizePivot = 130.0;
  static constexpr std::array<double, 6> kDiversifierOffset{0.5, -0.5, 0.0, 0.8, 1.5, 1.0};
  static constexpr double kIndemnityAggregateBump = 10.0;
};

struct GroundTruth {
  GroundTruthKind kind = GroundTruthKind::Nonlinear;
  LinearGroundTruth linear;  // used when kind == Linear

  double evaluate(const BondRecord& r) const;
};

// Noise-free default surface; ignores r.spread.
double default_ground_truth(const BondRecord& r);

struct GeneratorConfig {
  std::size_t n = 934;
  std::uint64_t master_seed = 1;
  std::map<int, ContinuousTarget> continuous;              // keyed by canonical feature index
  std::map<int, std::vector<double>> level_probabilities;  // keyed by canonical feature index
  GroundTruth ground_truth;
  double noise_sd = 1.0;

  // Quartile anchors and level shares of the 934-bond reference sample.
  static GeneratorConfig calibrated();
  // Linear surface where el carries most of the signal and term, size,
  // coverage, rating, trigger and vendor carry none.
  static GeneratorConfig planted();

  void validate() const;
  std::string to_json_text() const;
  static GeneratorConfig from_json_text(const std::string& text);
};

// Continuous marginal targets exactly as given by the reference quartiles
// (min, Q1, median, Q3, max), before any mixture shaping.
QuantileAnchors reference_quartiles(int feature);
// Reference level shares (fractions) for a categorical feature.
std::vector<double> reference_level_shares(int feature);

Dataset generate(const GeneratorConfig& cfg);

// Kolmogorov-Smirnov distance between a sample and a target CDF.
template <class Cdf>
double ks_distance(std::vector<double> sample, const Cdf& cdf) {
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace catbond::synth
