#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace catbond {

enum class FeatureKind { Continuous, Categorical };

// Admissible range for a continuous column.
struct Bounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;

  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string describe() const;
  bool operator==(const Bounds&) const = default;
};

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  std::vector<std::string> levels;  // categorical only, in canonical order
  std::string unit;
  Bounds bounds;  // continuous only

  bool is_categorical() const { return kind == FeatureKind::Categorical; }
  int num_levels() const { return static_cast<int>(levels.size()); }
  bool operator==(const Feature&) const = default;
};

// Ordered predictor list plus the response column. Percent-valued columns are
// always on the 0-100 scale.
class Schema {
 public:
  Schema(Feature response, std::vector<Feature> features);

  // spread ~ ap, el, size, term, coverage, diversifier, rating_status, trigger, vendor
  static Schema canonical();

  int num_features() const { return static_cast<int>(features_.size()); }
  const Feature& feature(int p) const { return features_[static_cast<std::size_t>(p)]; }
  std::span<const Feature> features() const { return features_; }
  const Feature& response() const { return response_; }

  // Case-insensitive lookups. Level names also ignore spaces, '_' and '-',
  // so "Multi Peril" matches MultiPeril and "not rated" matches not_rated.
  std::optional<int> find_feature(std::string_view name) const;
  std::optional<int> find_level(int p, std::string_view level) const;

  std::string to_json_text() const;
  static Schema from_json_text(std::string_view text);
  // 16 hex digits of FNV-1a over to_json_text().
  std::string fingerprint() const;

  bool operator==(const Schema&) const = default;

 private:
  Feature response_;
  std::vector<Feature> features_;
};

// Column indices of the canonical schema.
namespace bond {
inline constexpr int kAp = 0;
inline constexpr int kEl = 1;
inline constexpr int kSize = 2;
inline constexpr int kTerm = 3;
inline constexpr int kCoverage = 4;
inline constexpr int kDiversifier = 5;
inline constexpr int kRatingStatus = 6;
inline constexpr int kTrigger = 7;
inline constexpr int kVendor = 8;
inline constexpr int kNumFeatures = 9;
}  // namespace bond

enum class Coverage { Aggregate, Occurrence, Both };
enum class Diversifier { Apac, Europe, MultiPeril, NaQuake, NaWind, SaQuake };
enum class RatingStatus { Rated, NotRated };
enum class Trigger { Indemnity, PureParametric, IndustryLossIndex, ParametricIndex, Model, Multiple };
enum class Vendor { Air, Aon, Eqecat, Rms, PrivatePlacement };

// One catastrophe bond observation in canonical-schema terms.
struct BondRecord {
  double spread = 0.0;  // percent of size
  double ap = 0.0;      // percent
  double el = 0.0;      // percent of size
  double size = 1.0;    // USD million
  double term = 1.0;    // years
  Coverage coverage = Coverage::Aggregate;
  Diversifier diversifier = Diversifier::Apac;
  RatingStatus rating_status = RatingStatus::Rated;
  Trigger trigger = Trigger::Indemnity;
  Vendor vendor = Vendor::Air;

  // Predictor row in canonical column order; categoricals as level indices.
  Eigen::VectorXd predictors() const;
  static BondRecord from_predictors(std::span<const double> row, double spread = 0.0);
};

// Validated, immutable table. Features are N x P column-major with categorical
// cells holding the level index as a double.
class Dataset {
 public:
  Dataset(Schema schema, Eigen::MatrixXd x, Eigen::VectorXd y, std::string provenance = {});

  const Schema& schema() const { return schema_; }
  Eigen::Index size() const { return y_.size(); }
  int num_features() const { return schema_.num_features(); }
  const Eigen::MatrixXd& features() const { return x_; }
  const Eigen::VectorXd& response() const { return y_; }
  double value(Eigen::Index row, int p) const { return x_(row, p); }
  int level(Eigen::Index row, int p) const { return static_cast<int>(x_(row, p)); }
  const std::string& provenance() const { return provenance_; }

  Dataset subset(std::span<const Eigen::Index> rows) const;
  Dataset with_response(Eigen::VectorXd y) const;

 private:
  Schema schema_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  std::string provenance_;
};

// Throws DataError naming the offending cell if `row` breaks the schema.
void validate_predictors(const Schema& schema, std::span<const double> row, std::size_t row_number = 0);

struct UnitOptions {
  // Columns given in basis points; their cells are divided by 100 on input.
  std::set<std::string> basis_point_columns;
};

Dataset parse_csv(std::istream& in, const Schema& schema, const UnitOptions& options = {});
Dataset read_csv_file(const std::string& path, const Schema& schema, const UnitOptions& options = {});

// Predictor rows only (the response column may be present and is ignored).
Eigen::MatrixXd parse_predictor_csv(std::istream& in, const Schema& schema, const UnitOptions& options = {});

// Continuous cells at 12 significant digits.
void write_csv(std::ostream& out, const Dataset& ds);

struct ContinuousSummary {
  std::string name;
  std::string unit;
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
};

struct LevelCount {
  std::string level;
  std::size_t count = 0;
  double percent = 0.0;
};

struct CategoricalSummary {
  std::string name;
  std::vector<LevelCount> levels;
};

struct SummaryStats {
  std::vector<ContinuousSummary> continuous;  // response first
  std::vector<CategoricalSummary> categorical;
};

// Linear interpolation between order statistics ("type 7"). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

SummaryStats summarize(const Dataset& ds);
void write_summary(std::ostream& out, const SummaryStats& stats);

// Spread as coupon minus money market rate, both in percent.
double derive_spread(double coupon, double money_market_rate);

}  // namespace catbond
