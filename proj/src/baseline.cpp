#include "catbond/baseline.hpp"

#include "catbond/error.hpp"
#include "catbond/forest.hpp"
#include "catbond/format.hpp"
#include "catbond/parallel.hpp"
#include "catbond/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

namespace catbond {

using Eigen::Index;

std::vector<std::string> design_columns(const Schema& schema) {
  std::vector<std::string> names{"intercept"};
  for (const auto& f : schema.features()) {
    if (!f.is_categorical()) names.push_back(f.name);
  }
  for (const auto& f : schema.features()) {
    if (!f.is_categorical()) continue;
    for (std::size_t l = 1; l < f.levels.size(); ++l) names.push_back(f.name + "=" + f.levels[l]);
  }
  return names;
}

namespace {

Index design_width(const Schema& schema) {
  Index w = 1;
  for (const auto& f : schema.features()) w += f.is_categorical() ? f.num_levels() - 1 : 1;
  return w;
}

template <typename Getter, typename Row>
void fill_row(const Schema& schema, Getter x, Row&& row) {
  row.setZero();
  row(0) = 1.0;
  Index c = 1;
  for (int p = 0; p < schema.num_features(); ++p) {
    if (!schema.feature(p).is_categorical()) row(c++) = x(p);
  }
  for (int p = 0; p < schema.num_features(); ++p) {
    const auto& f = schema.feature(p);
    if (!f.is_categorical()) continue;
    const int level = static_cast<int>(x(p));
    if (level > 0) row(c + level - 1) = 1.0;
    c += f.num_levels() - 1;
  }
}

}  // namespace

Eigen::MatrixXd design_matrix(const Dataset& ds) {
  const auto& schema = ds.schema();
  Eigen::MatrixXd d(ds.size(), design_width(schema));
  for (Index i = 0; i < ds.size(); ++i) {
    fill_row(schema, [&](int p) { return ds.value(i, p); }, d.row(i));
  }
  return d;
}

Eigen::RowVectorXd design_row(const Schema& schema, std::span<const double> x) {
  validate_predictors(schema, x);
  Eigen::RowVectorXd row(design_width(schema));
  fill_row(schema, [&](int p) { return x[static_cast<std::size_t>(p)]; }, row);
  return row;
}

LinearModel::LinearModel(Schema schema, Eigen::VectorXd coefficients)
    : schema_(std::move(schema)),
      fingerprint_(schema_.fingerprint()),
      names_(design_columns(schema_)),
      beta_(std::move(coefficients)) {
  if (beta_.size() != static_cast<Index>(names_.size())) {
    throw InvariantError("coefficient count does not match the design matrix");
  }
  if (!beta_.allFinite()) throw InvariantError("non-finite OLS coefficient");
}

std::vector<std::string> LinearModel::reference_levels() const {
  std::vector<std::string> out;
  for (const auto& f : schema_.features()) out.push_back(f.is_categorical() ? f.levels.front() : std::string{});
  return out;
}

double LinearModel::predict(std::span<const double> x) const { return design_row(schema_, x).dot(beta_); }

Eigen::VectorXd LinearModel::predict(const Dataset& ds) const {
  if (ds.schema().fingerprint() != fingerprint_) throw SchemaMismatchError("dataset schema differs from the model's");
  return design_matrix(ds) * beta_;
}

namespace {

// Solves the weighted problem on a precomputed design. Rows with zero weight drop out.
Eigen::VectorXd solve_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, std::span<const int> weights,
                          const std::vector<std::string>& names) {
  const Index n = design.rows();
  const Index cols = design.cols();
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i) {
    if (weights.empty() || weights[static_cast<std::size_t>(i)] > 0) rows.push_back(i);
  }
  if (static_cast<Index>(rows.size()) <= cols) {
    throw RankDeficientError("OLS needs more distinct rows (" + std::to_string(rows.size()) + ") than design columns (" +
                             std::to_string(cols) + ")");
  }
  Eigen::MatrixXd a(static_cast<Index>(rows.size()), cols);
  Eigen::VectorXd b(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double s = weights.empty() ? 1.0 : std::sqrt(static_cast<double>(weights[static_cast<std::size_t>(rows[r])]));
    a.row(static_cast<Index>(r)) = s * design.row(rows[r]);
    b(static_cast<Index>(r)) = s * y(rows[r]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < cols) {
    std::vector<Index> bad;
    for (Index k = qr.rank(); k < cols; ++k) bad.push_back(qr.colsPermutation().indices()(k));
    std::sort(bad.begin(), bad.end());
    std::string msg = "design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                      std::to_string(cols) + "); dependent columns:";
    for (Index k : bad) msg += " " + names[static_cast<std::size_t>(k)];
    throw RankDeficientError(msg);
  }
  return qr.solve(b);
}

}  // namespace

LinearModel fit_ols(const Dataset& ds, std::span<const int> weights) {
  if (!weights.empty() && static_cast<Index>(weights.size()) != ds.size()) {
    throw DataError("weight vector length differs from the dataset");
  }
  return LinearModel(ds.schema(), solve_ols(design_matrix(ds), ds.response(), weights, design_columns(ds.schema())));
}

std::string to_string(OlsScheme s) {
  switch (s) {
    case OlsScheme::BootstrapOob:
      return "bootstrap_oob";
    case OlsScheme::KFold:
      return "kfold";
    case OlsScheme::Loocv:
      return "loocv";
  }
  return "";
}

OlsScheme parse_ols_scheme(const std::string& s) {
  if (s == "bootstrap_oob" || s == "bootstrap") return OlsScheme::BootstrapOob;
  if (s == "kfold") return OlsScheme::KFold;
  if (s == "loocv") return OlsScheme::Loocv;
  throw DataError("unknown OLS scheme '" + s + "' (expected bootstrap_oob, kfold or loocv)");
}

OlsEvaluation evaluate_ols(const Dataset& ds, const OlsEvaluationOptions& options) {
  const Index n = ds.size();
  const auto design = design_matrix(ds);
  const auto names = design_columns(ds.schema());
  const Eigen::VectorXd& y = ds.response();

  // Each refit: the rows it fits on (as multiplicities) and the rows it predicts.
  struct Plan {
    std::vector<int> weights;
    std::vector<Index> predicted;
  };
  std::vector<Plan> plans;
  switch (options.scheme) {
    case OlsScheme::BootstrapOob: {
      if (options.resamples < 1) throw DataError("bootstrap needs at least one resample");
      plans.resize(static_cast<std::size_t>(options.resamples));
      for (std::size_t b = 0; b < plans.size(); ++b) {
        Rng rng(derive_seed(options.seed, {0x6f6c73ULL, b}));
        plans[b].weights = draw_bootstrap(n, rng);
        for (Index i = 0; i < n; ++i) {
          if (plans[b].weights[static_cast<std::size_t>(i)] == 0) plans[b].predicted.push_back(i);
        }
      }
      break;
    }
    case OlsScheme::KFold: {
      for (auto& fold : kfold_partition(n, options.folds, options.seed)) {
        Plan p;
        p.weights.assign(static_cast<std::size_t>(n), 1);
        for (Index i : fold) p.weights[static_cast<std::size_t>(i)] = 0;
        p.predicted = std::move(fold);
        plans.push_back(std::move(p));
      }
      break;
    }
    case OlsScheme::Loocv: {
      for (Index i = 0; i < n; ++i) {
        Plan p;
        p.weights.assign(static_cast<std::size_t>(n), 1);
        p.weights[static_cast<std::size_t>(i)] = 0;
        p.predicted = {i};
        plans.push_back(std::move(p));
      }
      break;
    }
  }

  std::vector<std::optional<Eigen::VectorXd>> held_out(plans.size());
  parallel_for(plans.size(), options.threads, [&](std::size_t k) {
    const auto& plan = plans[k];
    if (plan.predicted.empty()) return;
    Eigen::VectorXd beta;
    try {
      beta = solve_ols(design, y, plan.weights, names);
    } catch (const RankDeficientError&) {
      return;
    }
    Eigen::VectorXd pred(static_cast<Index>(plan.predicted.size()));
    for (std::size_t r = 0; r < plan.predicted.size(); ++r) {
      if (plan.weights[static_cast<std::size_t>(plan.predicted[r])] != 0) {
        throw InvariantError("held-out row was used for fitting");
      }
      pred(static_cast<Index>(r)) = design.row(plan.predicted[r]).dot(beta);
    }
    held_out[k] = std::move(pred);
  });

  OlsEvaluation ev;
  ev.scheme = options.scheme;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  for (std::size_t k = 0; k < plans.size(); ++k) {
    if (!held_out[k]) {
      if (!plans[k].predicted.empty()) ++ev.skipped_rank_deficient;
      continue;
    }
    ++ev.refits;
    if (options.observer) {
      std::vector<Index> fit_rows;
      for (Index i = 0; i < n; ++i) {
        if (plans[k].weights[static_cast<std::size_t>(i)] > 0) fit_rows.push_back(i);
      }
      options.observer(static_cast<int>(k), fit_rows, plans[k].predicted);
    }
    for (std::size_t r = 0; r < plans[k].predicted.size(); ++r) {
      const auto i = plans[k].predicted[r];
      sum(i) += (*held_out[k])(static_cast<Index>(r));
      ++count[static_cast<std::size_t>(i)];
    }
  }

  ev.prediction = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  double ysum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (count[static_cast<std::size_t>(i)] == 0) continue;
    ev.prediction(i) = sum(i) / count[static_cast<std::size_t>(i)];
    ysum += y(i);
    ++ev.n_used;
  }
  if (ev.n_used == 0) throw DataError("no OLS refit produced a held-out prediction");
  const double ybar = ysum / static_cast<double>(ev.n_used);
  double sse = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (count[static_cast<std::size_t>(i)] == 0) continue;
    sse += (y(i) - ev.prediction(i)) * (y(i) - ev.prediction(i));
    ev.tss += (y(i) - ybar) * (y(i) - ybar);
  }
  ev.mse = sse / static_cast<double>(ev.n_used);
  ev.r2 = ev.tss > 0.0 ? 1.0 - ev.mse / (ev.tss / static_cast<double>(ev.n_used))
                       : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

void write_coefficients_csv(std::ostream& out, const LinearModel& m) {
  out << "term,coefficient\n";
  for (std::size_t k = 0; k < m.coefficient_names().size(); ++k) {
    out << m.coefficient_names()[k] << ',' << format_number(m.coefficients()(static_cast<Index>(k)), 12) << '\n';
  }
}

void write_ols_evaluation_csv(std::ostream& out, std::span<const OlsEvaluation> evaluations) {
  out << "scheme,refits,skipped_rank_deficient,n_used,mse,tss,r2\n";
  for (const auto& e : evaluations) {
    out << to_string(e.scheme) << ',' << e.refits << ',' << e.skipped_rank_deficient << ',' << e.n_used << ','
        << format_number(e.mse) << ',' << format_number(e.tss) << ',' << format_number(e.r2) << '\n';
  }
}

}  // namespace catbond
