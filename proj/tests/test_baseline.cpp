#include "catbond/baseline.hpp"
#include "catbond/error.hpp"
#include "catbond/forest.hpp"
#include "catbond/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace catbond;

namespace {

Schema continuous_schema(int p) {
  std::vector<Feature> features;
  for (int j = 0; j < p; ++j) {
    Feature f;
    f.name = "x" + std::to_string(j);
    features.push_back(f);
  }
  Feature y;
  y.name = "y";
  return Schema(y, features);
}

Dataset noiseless_el(std::size_t n) {
  auto cfg = synth::GeneratorConfig::calibrated();
  cfg.n = n;
  cfg.noise_sd = 0;
  cfg.ground_truth.kind = synth::GroundTruthKind::Linear;
  cfg.ground_truth.linear = {};
  cfg.ground_truth.linear.intercept = 3.0;
  cfg.ground_truth.linear.el = 2.0;
  // Even level shares so every dummy column is populated at small n.
  for (auto& [p, probs] : cfg.level_probabilities) std::fill(probs.begin(), probs.end(), 1.0 / static_cast<double>(probs.size()));
  return synth::generate(cfg);
}

double coefficient(const LinearModel& m, const std::string& name) {
  for (std::size_t k = 0; k < m.coefficient_names().size(); ++k) {
    if (m.coefficient_names()[k] == name) return m.coefficients()(static_cast<Eigen::Index>(k));
  }
  throw std::out_of_range(name);
}

}  // namespace

TEST(Design, ColumnCountAndNames) {
  const auto s = Schema::canonical();
  const auto names = design_columns(s);
  // 1 + 4 continuous + (2 + 5 + 1 + 5 + 4) dummies
  ASSERT_EQ(names.size(), 22u);
  EXPECT_EQ(names[0], "intercept");
  EXPECT_EQ(names[2], "el");
  EXPECT_EQ(names[5], "coverage=occurrence");
  EXPECT_EQ(names.back(), "vendor=pp");
}

TEST(Design, DummyCodingRoundTrip) {
  const auto s = Schema::canonical();
  BondRecord r;
  r.ap = 2;
  r.el = 1;
  r.size = 90;
  r.term = 3;
  r.coverage = Coverage::Both;
  r.diversifier = Diversifier::SaQuake;
  r.trigger = Trigger::Indemnity;
  r.vendor = Vendor::Rms;
  const Eigen::VectorXd x = r.predictors();
  const auto row = design_row(s, std::span<const double>(x.data(), x.size()));
  const auto names = design_columns(s);
  // Decode each categorical from its dummies; all-zero means the reference level.
  for (int p = bond::kCoverage; p < bond::kNumFeatures; ++p) {
    const auto& f = s.feature(p);
    int level = 0;
    for (int l = 1; l < f.num_levels(); ++l) {
      const auto it = std::find(names.begin(), names.end(), f.name + "=" + f.levels[static_cast<std::size_t>(l)]);
      if (row(it - names.begin()) == 1.0) level = l;
    }
    EXPECT_EQ(level, static_cast<int>(x(p))) << f.name;
  }
  EXPECT_EQ(row.sum(), 1 + 2 + 1 + 90 + 3 + 3);  // intercept, continuous, three non-reference dummies
  const LinearModel m(s, Eigen::VectorXd::Zero(22));
  EXPECT_EQ(m.reference_levels()[bond::kVendor], "AIR");
  EXPECT_EQ(m.reference_levels()[bond::kEl], "");
}

TEST(FitOls, RecoversExactLinearSurface) {
  const auto ds = noiseless_el(600);
  const auto m = fit_ols(ds);
  EXPECT_NEAR(coefficient(m, "intercept"), 3.0, 1e-8);
  EXPECT_NEAR(coefficient(m, "el"), 2.0, 1e-8);
  for (std::size_t k = 0; k < m.coefficient_names().size(); ++k) {
    if (k == 0 || m.coefficient_names()[k] == "el") continue;
    EXPECT_NEAR(m.coefficients()(static_cast<Eigen::Index>(k)), 0.0, 1e-8) << m.coefficient_names()[k];
  }
  const Eigen::VectorXd pred = m.predict(ds);
  EXPECT_LT((pred - ds.response()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitOls, DuplicatedColumnIsRankDeficient) {
  Eigen::MatrixXd x(6, 2);
  x << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 7, 7;
  Eigen::VectorXd y(6);
  y << 1, 2, 2, 4, 5, 8;
  const Dataset ds(continuous_schema(2), x, y);
  try {
    fit_ols(ds);
    FAIL() << "expected a rank-deficiency error";
  } catch (const RankDeficientError& e) {
    EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
  }
}

TEST(FitOls, ThreePointHandSolution) {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 3, 4;
  const auto m = fit_ols(Dataset(continuous_schema(1), x, y));
  // Normal equations: slope = Sxy / Sxx = 3 / 2, intercept = 8/3 - 3/2.
  EXPECT_NEAR(m.coefficients()(0), 7.0 / 6.0, 1e-12);
  EXPECT_NEAR(m.coefficients()(1), 1.5, 1e-12);
}

TEST(FitOls, WeightsActAsRepeatedRows) {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  Eigen::VectorXd y(4);
  y << 1, 0, 4, 2;
  const Dataset ds(continuous_schema(1), x, y);
  const std::vector<int> w{2, 1, 0, 3};
  const auto weighted = fit_ols(ds, w);
  const std::vector<Eigen::Index> rows{0, 0, 1, 3, 3, 3};
  const auto expanded = fit_ols(ds.subset(rows));
  EXPECT_NEAR((weighted.coefficients() - expanded.coefficients()).norm(), 0.0, 1e-12);
  EXPECT_THROW(fit_ols(ds, std::vector<int>{1, 1}), DataError);
}

TEST(EvaluateOls, LoocvNeverUsesTheHeldOutRow) {
  Eigen::MatrixXd x(8, 1);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i;
    y(i) = 1 + 0.5 * i + (i % 3 == 0 ? 0.3 : -0.2);
  }
  const Dataset ds(continuous_schema(1), x, y);
  OlsEvaluationOptions opt;
  opt.scheme = OlsScheme::Loocv;
  int refits = 0;
  opt.observer = [&](int, std::span<const Eigen::Index> fit, std::span<const Eigen::Index> held) {
    ++refits;
    ASSERT_EQ(held.size(), 1u);
    EXPECT_EQ(std::find(fit.begin(), fit.end(), held[0]), fit.end());
    EXPECT_EQ(fit.size(), 7u);
  };
  const auto ev = evaluate_ols(ds, opt);
  EXPECT_EQ(refits, 8);
  EXPECT_EQ(ev.refits, 8);
  EXPECT_EQ(ev.n_used, 8);
  // Row 0 left out: refit on rows 1..7 and extrapolate.
  const std::vector<Eigen::Index> rest{1, 2, 3, 4, 5, 6, 7};
  const auto m = fit_ols(ds.subset(rest));
  EXPECT_NEAR(ev.prediction(0), m.coefficients()(0), 1e-12);
}

TEST(EvaluateOls, KFoldAndBootstrapHoldOutOnly) {
  const auto ds = noiseless_el(300);
  for (auto scheme : {OlsScheme::KFold, OlsScheme::BootstrapOob}) {
    OlsEvaluationOptions opt;
    opt.scheme = scheme;
    opt.resamples = 30;
    opt.seed = 4;
    opt.observer = [&](int, std::span<const Eigen::Index> fit, std::span<const Eigen::Index> held) {
      for (auto i : held) EXPECT_FALSE(std::binary_search(fit.begin(), fit.end(), i));
    };
    const auto ev = evaluate_ols(ds, opt);
    EXPECT_GE(ev.r2, 0.999) << to_string(scheme);
    EXPECT_EQ(ev.r2, 1.0 - ev.mse / (ev.tss / static_cast<double>(ev.n_used)));
  }
}

TEST(EvaluateOls, ExactLinearDataAnyScheme) {
  const auto ds = noiseless_el(200);
  for (auto scheme : {OlsScheme::BootstrapOob, OlsScheme::KFold, OlsScheme::Loocv}) {
    OlsEvaluationOptions opt;
    opt.scheme = scheme;
    opt.resamples = 50;
    EXPECT_GE(evaluate_ols(ds, opt).r2, 0.999) << to_string(scheme);
  }
}

TEST(EvaluateOls, ThreadIndependent) {
  auto cfg = synth::GeneratorConfig::calibrated();
  cfg.n = 300;
  const auto ds = synth::generate(cfg);
  OlsEvaluationOptions opt;
  opt.resamples = 40;
  opt.seed = 2;
  const auto a = evaluate_ols(ds, opt);
  opt.threads = 3;
  const auto b = evaluate_ols(ds, opt);
  EXPECT_EQ(a.mse, b.mse);
  EXPECT_EQ(a.skipped_rank_deficient, b.skipped_rank_deficient);
  EXPECT_EQ(a.refits + a.skipped_rank_deficient, 40);
}

TEST(EvaluateOls, SchemeNames) {
  for (auto s : {OlsScheme::BootstrapOob, OlsScheme::KFold, OlsScheme::Loocv}) EXPECT_EQ(parse_ols_scheme(to_string(s)), s);
  EXPECT_THROW(parse_ols_scheme("jackknife"), DataError);
}

TEST(Comparison, LinearTruthOlsNearForest) {
  auto cfg = synth::GeneratorConfig::planted();
  cfg.noise_sd = 1.0;
  cfg.master_seed = 3;
  const auto ds = synth::generate(cfg);
  ForestParams p;
  p.n_trees = 300;
  p.master_seed = 1;
  const double forest = oob_predict(fit_forest(ds, p), ds).r2_oob;
  OlsEvaluationOptions opt;
  opt.resamples = 200;
  const double ols = evaluate_ols(ds, opt).r2;
  EXPECT_GE(ols, forest - 0.03) << "ols " << ols << " forest " << forest;
}

TEST(Comparison, NonlinearTruthFavoursForest) {
  auto cfg = synth::GeneratorConfig::calibrated();
  cfg.master_seed = 11;
  const auto ds = synth::generate(cfg);
  ForestParams p;
  p.n_trees = 300;
  p.master_seed = 2;
  const double forest = oob_predict(fit_forest(ds, p), ds).r2_oob;
  OlsEvaluationOptions opt;
  opt.resamples = 200;
  const double ols = evaluate_ols(ds, opt).r2;
  EXPECT_GE(forest - ols, 0.10) << "ols " << ols << " forest " << forest;
}

TEST(Output, CsvLayout) {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 3, 4;
  const auto m = fit_ols(Dataset(continuous_schema(1), x, y));
  std::ostringstream out;
  write_coefficients_csv(out, m);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "term,coefficient");
  EXPECT_NE(out.str().find("\nx0,1.5\n"), std::string::npos);
  OlsEvaluation e;
  e.refits = 3;
  e.n_used = 3;
  std::ostringstream ev;
  write_ols_evaluation_csv(ev, std::span<const OlsEvaluation>(&e, 1));
  EXPECT_EQ(ev.str(), "scheme,refits,skipped_rank_deficient,n_used,mse,tss,r2\nbootstrap_oob,3,0,3,0,0,0\n");
}
