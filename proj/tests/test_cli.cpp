#include "cli.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using catbond::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "catbond_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(call({"gen-data", "--n", "200", "--seed", "3", "--out-dir", dir("data")}).code, 0);
    ASSERT_EQ(call({"train", "--data", data(), "--trees", "30", "--seed", "5", "--out-dir", dir("train")}).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string dir(const std::string& name) { return (root_ / name).string(); }
  static std::string data() { return (root_ / "data" / "data.csv").string(); }
  static std::string model() { return (root_ / "train" / "model.json").string(); }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenDataWritesTableConfigAndManifest) {
  EXPECT_EQ(lines(slurp(fs::path(dir("data")) / "data.csv")), 201u);
  EXPECT_TRUE(fs::exists(fs::path(dir("data")) / "generator_config.json"));
  EXPECT_TRUE(fs::exists(fs::path(dir("data")) / "data_summary.txt"));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(dir("data")) / "gen-data.manifest.json"));
  EXPECT_EQ(manifest.at("command"), "gen-data");
  EXPECT_EQ(manifest.at("seed"), 3);
  EXPECT_TRUE(manifest.at("outputs").contains("data.csv"));
}

TEST_F(Cli, TrainReportsOobAccuracy) {
  const auto report = slurp(fs::path(dir("train")) / "train_report.csv");
  EXPECT_NE(report.find("R2_OOB"), std::string::npos);
  EXPECT_EQ(lines(slurp(fs::path(dir("train")) / "oob_predictions.csv")), 201u);
}

TEST_F(Cli, TrainIsThreadIndependent) {
  ASSERT_EQ(call({"train", "--data", data(), "--trees", "30", "--seed", "5", "--threads", "3", "--out-dir", dir("train3")}).code, 0);
  EXPECT_EQ(slurp(fs::path(dir("train3")) / "model.json"), slurp(model()));
  EXPECT_EQ(slurp(fs::path(dir("train3")) / "train_report.csv"), slurp(fs::path(dir("train")) / "train_report.csv"));
}

TEST_F(Cli, ImportanceHasOneRowPerFeature) {
  const auto r = call({"importance", "--model", model(), "--data", data(), "--out-dir", dir("imp")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(fs::path(dir("imp")) / "importance.csv")), 10u);
  EXPECT_EQ(lines(slurp(fs::path(dir("imp")) / "ranking.csv")), 10u);
}

TEST_F(Cli, PredictLabelsGuidance) {
  const std::vector<std::string> record{"predict", "--model", model(), "--ap", "2.51", "--el", "1.88", "--size", "130",
                                        "--term", "3.18", "--coverage", "occurrence", "--diversifier", "Multi Peril",
                                        "--rating-status", "not rated", "--trigger", "indemnity", "--vendor", "AIR",
                                        "--out-dir", dir("pred")};
  auto r = call(record);
  ASSERT_EQ(r.code, 0) << r.err;
  auto csv = slurp(fs::path(dir("pred")) / "predictions.csv");
  const auto row = csv.substr(csv.find('\n') + 1);
  const double pred = std::stod(row.substr(row.find(',') + 1));

  auto with_guidance = record;
  with_guidance.insert(with_guidance.end(), {"--guidance", std::to_string(pred)});
  ASSERT_EQ(call(with_guidance).code, 0);
  EXPECT_NE(slurp(fs::path(dir("pred")) / "predictions.csv").find(",fair"), std::string::npos);

  with_guidance.back() = std::to_string(pred - 5);
  ASSERT_EQ(call(with_guidance).code, 0);
  EXPECT_NE(slurp(fs::path(dir("pred")) / "predictions.csv").find(",under"), std::string::npos);

  with_guidance.back() = std::to_string(pred + 5);
  ASSERT_EQ(call(with_guidance).code, 0);
  EXPECT_NE(slurp(fs::path(dir("pred")) / "predictions.csv").find(",over"), std::string::npos);
}

TEST_F(Cli, PredictFromCsv) {
  const auto r = call({"predict", "--model", model(), "--input", data(), "--out-dir", dir("pred_csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(fs::path(dir("pred_csv")) / "predictions.csv")), 201u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(call({"train", "--data", dir("missing.csv"), "--out-dir", dir("x")}).code, 2);
  EXPECT_EQ(call({"train", "--data", data(), "--mtry", "12", "--out-dir", dir("x")}).code, 1);
  EXPECT_EQ(call({"predict", "--model", model(), "--ap", "2", "--el", "1", "--size", "100", "--term", "3",
                  "--coverage", "occurrence", "--diversifier", "Atlantis", "--rating-status", "rated", "--trigger",
                  "indemnity", "--vendor", "AIR", "--out-dir", dir("x")})
                .code,
            1);
  EXPECT_EQ(call({"no-such-command"}).code, 1);
  EXPECT_EQ(call({"--help"}).code, 0);

  const auto bad = (root_ / "bad.csv").string();
  std::ofstream(bad) << "spread,ap,el,size,term,coverage,diversifier,rating_status,trigger,vendor\n"
                        "5,2,x,130,3,occurrence,APAC,rated,indemnity,AIR\n";
  const auto r = call({"train", "--data", bad, "--out-dir", dir("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 1"), std::string::npos);
  EXPECT_NE(r.err.find("el"), std::string::npos);
}

TEST_F(Cli, BaselineWritesAllSchemes) {
  // Rare levels are missing from the 200-row sample, so its design is rank deficient.
  const auto small = call({"baseline", "--data", data(), "--out-dir", dir("ols_small")});
  EXPECT_EQ(small.code, 1);
  EXPECT_NE(small.err.find("rank deficient"), std::string::npos);
  ASSERT_EQ(call({"gen-data", "--seed", "4", "--out-dir", dir("full")}).code, 0);
  const auto full = (fs::path(dir("full")) / "data.csv").string();
  const auto r = call({"baseline", "--data", full, "--resamples", "50", "--out-dir", dir("ols")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(fs::path(dir("ols")) / "ols_evaluation.csv")), 4u);
  EXPECT_EQ(lines(slurp(fs::path(dir("ols")) / "ols_coefficients.csv")), 23u);
}

TEST_F(Cli, ReportBundleAndReplay) {
  const auto r = call({"report", "--model", model(), "--data", data(), "--scan", "5,10,30", "--tune-grid", "2,3",
                       "--stability", "2", "--no-tune", "--out-dir", dir("report")});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path d = dir("report");
  for (const char* name : {"importance.csv", "ranking.csv", "train_report.csv", "oob_convergence.csv", "mtry_curve.csv",
                           "stability_summary.csv", "stability_iterations.csv", "summary.md", "report.manifest.json"}) {
    EXPECT_TRUE(fs::exists(d / name)) << name;
  }
  const auto replay = call({"replay", (d / "report.manifest.json").string(), "--out-dir", dir("report_again")});
  EXPECT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(slurp(d / "summary.md"), slurp(fs::path(dir("report_again")) / "summary.md"));
}

TEST_F(Cli, ReplayDetectsChangedInput) {
  const auto copy = (root_ / "copy.csv").string();
  fs::copy_file(data(), copy, fs::copy_options::overwrite_existing);
  ASSERT_EQ(call({"train", "--data", copy, "--trees", "5", "--out-dir", dir("t5")}).code, 0);
  std::ofstream(copy, std::ios::app) << "\n";
  const auto r = call({"replay", (fs::path(dir("t5")) / "train.manifest.json").string(), "--out-dir", dir("t5b")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, StabilityAndTuneRun) {
  auto r = call({"stability", "--data", data(), "--iterations", "2", "--no-tune", "--trees", "10", "--out-dir", dir("stab")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(dir("stab")) / "stability_frequency_minimal_depth.csv"));
  r = call({"tune", "--data", data(), "--grid", "1-3", "--folds", "3", "--trees", "10", "--ntree-grid", "5,10",
            "--out-dir", dir("tune")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(fs::path(dir("tune")) / "mtry_curve.csv")), 4u);
  EXPECT_EQ(lines(slurp(fs::path(dir("tune")) / "oob_convergence.csv")), 3u);
}
