#pragma once

// Ordinary least squares on main effects, with treatment-coded categoricals
// (the first schema level is the reference).

#include "catbond/schema.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace catbond {

// Column names of the design matrix: "intercept", each continuous feature by
// name, then "<feature>=<level>" for every non-reference level.
std::vector<std::string> design_columns(const Schema& schema);

Eigen::MatrixXd design_matrix(const Dataset& ds);
Eigen::RowVectorXd design_row(const Schema& schema, std::span<const double> x);

class LinearModel {
 public:
  LinearModel(Schema schema, Eigen::VectorXd coefficients);

  const Schema& schema() const { return schema_; }
  const std::string& schema_fingerprint() const { return fingerprint_; }
  const Eigen::VectorXd& coefficients() const { return beta_; }
  const std::vector<std::string>& coefficient_names() const { return names_; }
  // Reference level name per categorical feature, empty for continuous ones.
  std::vector<std::string> reference_levels() const;

  double predict(std::span<const double> x) const;
  Eigen::VectorXd predict(const Dataset& ds) const;

 private:
  Schema schema_;
  std::string fingerprint_;
  std::vector<std::string> names_;
  Eigen::VectorXd beta_;
};

inline constexpr double kRankTolerance = 1e-10;

// Least squares via column-pivoting QR. `weights` holds optional per-row
// multiplicities (rows with weight 0 are ignored). Throws RankDeficientError
// naming the dependent columns.
LinearModel fit_ols(const Dataset& ds, std::span<const int> weights = {});

enum class OlsScheme { BootstrapOob, KFold, Loocv };

std::string to_string(OlsScheme s);
OlsScheme parse_ols_scheme(const std::string& s);

struct OlsEvaluationOptions {
  OlsScheme scheme = OlsScheme::BootstrapOob;
  int resamples = 700;  // bootstrap_oob
  int folds = 10;       // kfold
  std::uint64_t seed = 0;
  int threads = 1;
  // Called once per refit with the rows used for fitting and the rows predicted.
  std::function<void(int refit, std::span<const Eigen::Index> fit_rows, std::span<const Eigen::Index> predicted)>
      observer;
};

struct OlsEvaluation {
  OlsScheme scheme = OlsScheme::BootstrapOob;
  int refits = 0;
  int skipped_rank_deficient = 0;
  Eigen::VectorXd prediction;  // NaN where no refit produced a held-out prediction
  Eigen::Index n_used = 0;
  double mse = 0.0;
  double tss = 0.0;
  double r2 = 0.0;  // 1 - mse / (tss / n_used)
};

OlsEvaluation evaluate_ols(const Dataset& ds, const OlsEvaluationOptions& options);

void write_coefficients_csv(std::ostream& out, const LinearModel& m);
void write_ols_evaluation_csv(std::ostream& out, std::span<const OlsEvaluation> evaluations);

}  // namespace catbond
