#include "cli.hpp"

#include "catbond/baseline.hpp"
#include "catbond/digest.hpp"
#include "catbond/error.hpp"
#include "catbond/format.hpp"
#include "catbond/forest.hpp"
#include "catbond/importance.hpp"
#include "catbond/model_io.hpp"
#include "catbond/schema.hpp"
#include "catbond/stability.hpp"
#include "catbond/synth.hpp"
#include "catbond/tuning.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#ifndef CATBOND_VERSION
#define CATBOND_VERSION "0.0.0"
#endif

namespace catbond::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collects the files a command writes so the manifest can record their digests.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
  }

  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  void write(const std::string& name, const std::string& content) {
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write '" + p + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + p + "'");
    files_[name] = fnv1a_hex(content);
  }

  template <class Writer>
  void write_with(const std::string& name, Writer w) {
    std::ostringstream ss;
    w(ss);
    write(name, ss.str());
  }

  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::string dir_;
  std::map<std::string, std::string> files_;
};

// Resolved parameters of one run, in a form that can be replayed as flags.
class Params {
 public:
  template <class T>
  void set(const std::string& flag, const T& value) {
    std::ostringstream ss;
    if constexpr (std::is_same_v<T, bool>) {
      ss << (value ? "true" : "false");
    } else if constexpr (std::is_same_v<T, double>) {
      ss << format_number(value, 17);
    } else {
      ss << value;
    }
    values_.emplace_back(flag, ss.str());
  }
  void set_list(const std::string& flag, const std::vector<std::string>& values) {
    for (const auto& v : values) values_.emplace_back(flag, v);
  }
  void input(const std::string& role, const std::string& path) { inputs_[role] = path; }

  json to_json() const {
    json j = json::array();
    for (const auto& [k, v] : values_) j.push_back({k, v});
    return j;
  }
  const std::map<std::string, std::string>& inputs() const { return inputs_; }

 private:
  std::vector<std::pair<std::string, std::string>> values_;
  std::map<std::string, std::string> inputs_;
};

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& command, const Globals& g, const Params& params, Outputs& outputs) {
  json j;
  j["tool"] = "catbond";
  j["version"] = CATBOND_VERSION;
  j["command"] = command;
  j["seed"] = g.seed;
  j["threads"] = g.threads;
  j["out_dir"] = g.out_dir;
  j["parameters"] = params.to_json();
  json inputs = json::object();
  for (const auto& [role, path] : params.inputs()) inputs[role] = {{"path", path}, {"fnv1a64", fnv1a_hex(read_file(path))}};
  j["inputs"] = inputs;
  j["outputs"] = outputs.files();
  j["timestamp"] = timestamp_utc();
  std::ofstream out(outputs.path(command + ".manifest.json"), std::ios::binary);
  if (!out) throw IoError("cannot write manifest in '" + g.out_dir + "'");
  out << j.dump(2) << '\n';
}

UnitOptions unit_options(const std::vector<std::string>& bps_columns) {
  UnitOptions u;
  u.basis_point_columns.insert(bps_columns.begin(), bps_columns.end());
  return u;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  // Comma-separated integers; "a-b" expands to a range.
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      const auto dash = item.find('-', 1);
      if (dash == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        if (hi < lo) throw DataError("empty range '" + item + "' in " + what);
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw DataError("cannot parse '" + item + "' in " + what);
    }
  }
  if (out.empty()) throw DataError(what + " is empty");
  return out;
}

struct ForestFlags {
  int trees = 700;
  int mtry = 3;
  int node_size = 5;
  int max_depth = -1;

  void add(CLI::App* app) {
    app->add_option("--trees", trees, "Number of trees K")->capture_default_str();
    app->add_option("--mtry", mtry, "Candidate features per split")->capture_default_str();
    app->add_option("--node-size", node_size, "Nodes with at most this many rows become leaves")->capture_default_str();
    app->add_option("--max-depth", max_depth, "Depth limit, negative for none")->capture_default_str();
  }
  ForestParams params(std::uint64_t seed) const { return ForestParams{trees, mtry, node_size, max_depth, seed}; }
  void record(Params& p) const {
    p.set("--trees", trees);
    p.set("--mtry", mtry);
    p.set("--node-size", node_size);
    p.set("--max-depth", max_depth);
  }
};

struct DataFlags {
  std::string path;
  std::vector<std::string> bps;

  void add(CLI::App* app) {
    app->add_option("--data", path, "Training data CSV")->required();
    app->add_option("--bps-columns", bps, "Continuous columns given in basis points");
  }
  Dataset load() const { return read_csv_file(path, Schema::canonical(), unit_options(bps)); }
  void record(Params& p) const {
    p.set("--data", path);
    p.set_list("--bps-columns", bps);
    p.input("data", path);
  }
};

// ---------------------------------------------------------------- gen-data

struct GenDataCmd {
  std::size_t n = 934;
  std::string preset = "calibrated";
  std::string config_path;
  std::optional<double> noise_sd;
  std::string output = "data.csv";

  void add(CLI::App* app) {
    app->add_option("--n", n, "Number of bonds")->capture_default_str();
    app->add_option("--preset", preset, "calibrated (nonlinear surface) or planted (linear surface)")
        ->check(CLI::IsMember({"calibrated", "planted"}))
        ->capture_default_str();
    app->add_option("--config", config_path, "Generator configuration JSON (overrides --preset)");
    app->add_option("--noise-sd", noise_sd, "Noise standard deviation, percent");
    app->add_option("--output", output, "Output CSV name")->capture_default_str();
  }

  void run(const Globals& g, std::ostream& out) const {
    auto cfg = config_path.empty()
                   ? (preset == "planted" ? synth::GeneratorConfig::planted() : synth::GeneratorConfig::calibrated())
                   : synth::GeneratorConfig::from_json_text(read_file(config_path));
    cfg.n = n;
    cfg.master_seed = g.seed;
    if (noise_sd) cfg.noise_sd = *noise_sd;
    cfg.validate();
    const auto ds = synth::generate(cfg);

    Outputs files(g.out_dir);
    files.write_with(output, [&](std::ostream& o) { write_csv(o, ds); });
    files.write("generator_config.json", cfg.to_json_text());
    files.write_with("data_summary.txt", [&](std::ostream& o) { write_summary(o, summarize(ds)); });

    Params p;
    p.set("--n", n);
    p.set("--preset", preset);
    if (!config_path.empty()) {
      p.set("--config", config_path);
      p.input("config", config_path);
    }
    if (noise_sd) p.set("--noise-sd", *noise_sd);
    p.set("--output", output);
    write_manifest("gen-data", g, p, files);
    out << "wrote " << ds.size() << " bonds to " << files.path(output) << '\n';
  }
};

// ---------------------------------------------------------------- train

void write_train_report(std::ostream& o, const Forest& f, const OobEvaluation& ev) {
  o << "metric,value\n";
  o << "N," << f.n_train() << '\n';
  o << "P," << f.schema().num_features() << '\n';
  o << "K," << f.num_trees() << '\n';
  o << "mtry," << f.params().mtry << '\n';
  o << "node_size," << f.params().node_size << '\n';
  o << "max_depth," << f.params().max_depth << '\n';
  o << "master_seed," << f.params().master_seed << '\n';
  o << "MSE_OOB," << format_number(ev.mse_oob, 17) << '\n';
  o << "TSS," << format_number(ev.tss, 17) << '\n';
  o << "R2_OOB," << format_number(ev.r2_oob, 17) << '\n';
  o << "n_used," << ev.n_used << '\n';
  o << "n_never_oob," << ev.n_never_oob << '\n';
}

void print_train_summary(std::ostream& out, const Forest& f, const OobEvaluation& ev) {
  out << "Random forest (N = " << f.n_train() << ", P = " << f.schema().num_features() << ", K = " << f.num_trees()
      << ", mtry = " << f.params().mtry << ", node size = " << f.params().node_size << ")\n";
  out << "  MSE_OOB = " << format_number(ev.mse_oob, 6) << "\n  R2_OOB  = " << format_number(100.0 * ev.r2_oob, 5)
      << " %\n";
  if (ev.n_never_oob > 0) out << "  rows never out of bag: " << ev.n_never_oob << '\n';
}

struct TrainCmd {
  DataFlags data;
  ForestFlags forest;
  std::string model = "model.json";

  void add(CLI::App* app) {
    data.add(app);
    forest.add(app);
    app->add_option("--model", model, "Model file name")->capture_default_str();
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    const auto params = forest.params(g.seed);
    params.validate(ds.num_features());
    const auto f = fit_forest(ds, params, g.threads);
    const auto ev = oob_predict(f, ds);

    Outputs files(g.out_dir);
    files.write(model, forest_to_json_text(f));
    files.write_with("train_report.csv", [&](std::ostream& o) { write_train_report(o, f, ev); });
    files.write_with("oob_predictions.csv", [&](std::ostream& o) {
      o << "row,spread,oob_prediction,oob_trees\n";
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        o << i + 1 << ',' << format_number(ds.response()(i), 12) << ',' << format_number(ev.prediction(i), 12) << ','
          << ev.oob_count[static_cast<std::size_t>(i)] << '\n';
      }
    });
    Params p;
    data.record(p);
    forest.record(p);
    p.set("--model", model);
    write_manifest("train", g, p, files);
    print_train_summary(out, f, ev);
  }
};

// ---------------------------------------------------------------- tune

struct TuneCmd {
  DataFlags data;
  ForestFlags forest;
  std::string grid;
  int folds = 5;
  std::string ntree_grid = "50,100,200,300,400,500,600,700,800,900,1000,1200,1400";
  bool skip_scan = false;

  void add(CLI::App* app) {
    data.add(app);
    forest.add(app);
    app->add_option("--grid", grid, "mtry values, e.g. 1-9 or 2,3,5 (default 1..P)");
    app->add_option("--folds", folds, "Cross-validation folds")->capture_default_str();
    app->add_option("--ntree-grid", ntree_grid, "Ascending forest sizes for the OOB scan")->capture_default_str();
    app->add_flag("--skip-scan", skip_scan, "Skip the forest-size scan");
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    MtrySearchOptions opt;
    if (!grid.empty()) opt.grid = parse_int_list(grid, "--grid");
    opt.folds = folds;
    opt.fixed = forest.params(g.seed);
    opt.seed = g.seed;
    opt.threads = g.threads;
    TuneResult result;
    result.mtry = grid_search_mtry(ds, opt);

    Outputs files(g.out_dir);
    files.write_with("mtry_curve.csv", [&](std::ostream& o) { write_mtry_curve_csv(o, result.mtry); });
    if (!skip_scan) {
      const auto ks = parse_int_list(ntree_grid, "--ntree-grid");
      auto fixed = forest.params(g.seed);
      fixed.mtry = result.mtry.chosen_mtry;
      result.scan = ntree_scan(ds, ks, fixed, g.threads);
      result.chosen_n_trees = choose_n_trees(result.scan);
      files.write_with("oob_convergence.csv", [&](std::ostream& o) { write_ntree_scan_csv(o, result.scan); });
    }
    files.write_with("tune_report.csv", [&](std::ostream& o) {
      o << "metric,value\nchosen_mtry," << result.mtry.chosen_mtry << '\n';
      if (!skip_scan) o << "chosen_n_trees," << result.chosen_n_trees << '\n';
    });
    Params p;
    data.record(p);
    forest.record(p);
    if (!grid.empty()) p.set("--grid", grid);
    p.set("--folds", folds);
    p.set("--ntree-grid", ntree_grid);
    p.set("--skip-scan", skip_scan);
    write_manifest("tune", g, p, files);

    out << "mtry  cv R2 (%)\n";
    for (const auto& pt : result.mtry.curve) {
      out << (pt.mtry == result.mtry.chosen_mtry ? "* " : "  ") << pt.mtry << "  " << format_number(100.0 * pt.cv_r2, 5)
          << '\n';
    }
    if (!skip_scan) {
      out << "K     MSE_OOB\n";
      for (const auto& row : result.scan) out << row.n_trees << "  " << format_number(row.mse_oob, 6) << '\n';
      out << "chosen K = " << result.chosen_n_trees << '\n';
    }
  }
};

// ---------------------------------------------------------------- importance

struct ImportanceFlags {
  std::string method = "both";
  std::string score = "percent";
  int reps = 1;

  void add(CLI::App* app) {
    app->add_option("--method", method, "permutation, minimal-depth or both")
        ->check(CLI::IsMember({"permutation", "minimal-depth", "both"}))
        ->capture_default_str();
    app->add_option("--score", score, "Permutation ranking score: percent, normalized or raw")->capture_default_str();
    app->add_option("--reps", reps, "Permutations per tree and feature")->capture_default_str();
  }
  void record(Params& p) const {
    p.set("--method", method);
    p.set("--score", score);
    p.set("--reps", reps);
  }
  RankingTable compute(const Forest& f, const Dataset& ds, const Globals& g) const {
    std::optional<PermutationImportance> pi;
    std::optional<MinimalDepthImportance> md;
    if (method != "minimal-depth") {
      PermutationOptions opt;
      opt.seed = g.seed;
      opt.repetitions = reps;
      opt.primary = parse_permutation_score(score);
      opt.threads = g.threads;
      pi = permutation_importance(f, ds, opt);
    }
    if (method != "permutation") md = minimal_depth(f);
    return rank_report(std::move(pi), std::move(md));
  }
};

Forest load_model_for(const std::string& path, const Dataset& ds) {
  auto f = load_forest(path);
  require_training_set(f, ds);
  return f;
}

struct ImportanceCmd {
  std::string model;
  DataFlags data;
  ImportanceFlags imp;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model file")->required();
    data.add(app);
    imp.add(app);
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    const auto f = load_model_for(model, ds);
    const auto table = imp.compute(f, ds, g);
    Outputs files(g.out_dir);
    files.write_with("importance.csv", [&](std::ostream& o) { write_importance_csv(o, table); });
    files.write_with("ranking.csv", [&](std::ostream& o) { write_ranking_csv(o, table); });
    Params p;
    p.set("--model", model);
    p.input("model", model);
    data.record(p);
    imp.record(p);
    write_manifest("importance", g, p, files);
    write_ranking_text(out, table);
  }
};

// ---------------------------------------------------------------- stability

struct StabilityFlags {
  int iterations = 100;
  bool no_tune = false;
  std::string grid;
  int folds = 5;
  std::string method = "both";
  std::string score = "percent";
  int reps = 1;

  void add(CLI::App* app, bool standalone) {
    app->add_option(standalone ? "--iterations" : "--stability", iterations,
                    standalone ? "Split-half iterations" : "Run split-half stability with this many iterations");
    app->add_flag("--no-tune", no_tune, "Use --mtry on every half instead of tuning it");
    app->add_option("--grid", grid, "mtry grid for per-half tuning (default 1..P)");
    app->add_option("--folds", folds, "Folds for per-half tuning");
    if (standalone) {
      app->add_option("--method", method, "permutation, minimal-depth or both")
          ->check(CLI::IsMember({"permutation", "minimal-depth", "both"}));
      app->add_option("--score", score, "Permutation ranking score");
      app->add_option("--reps", reps, "Permutations per tree and feature");
    }
  }
  void record(Params& p, bool standalone) const {
    p.set(standalone ? "--iterations" : "--stability", iterations);
    p.set("--no-tune", no_tune);
    if (!grid.empty()) p.set("--grid", grid);
    p.set("--folds", folds);
    if (standalone) {
      p.set("--method", method);
      p.set("--score", score);
      p.set("--reps", reps);
    }
  }
  StabilityReport compute(const Dataset& ds, const ForestParams& forest, const Globals& g) const {
    StabilityConfig cfg;
    cfg.iterations = iterations;
    cfg.seed = g.seed;
    cfg.tune_mtry_per_half = !no_tune;
    cfg.track_permutation = method != "minimal-depth";
    cfg.track_minimal_depth = method != "permutation";
    cfg.forest = forest;
    if (!grid.empty()) cfg.mtry_grid = parse_int_list(grid, "--grid");
    cfg.tuning_folds = folds;
    cfg.permutation_score = parse_permutation_score(score);
    cfg.permutation_repetitions = reps;
    cfg.threads = g.threads;
    return run_stability(ds, cfg);
  }
};

void write_stability_files(Outputs& files, const StabilityReport& r) {
  files.write_with("stability_summary.csv", [&](std::ostream& o) { write_stability_summary_csv(o, r); });
  files.write_with("stability_iterations.csv", [&](std::ostream& o) { write_iterations_csv(o, r); });
  files.write_with("stability_agreement.csv", [&](std::ostream& o) { write_agreement_csv(o, r); });
  if (r.permutation.tracked) {
    files.write_with("stability_frequency_permutation.csv", [&](std::ostream& o) { write_frequency_csv(o, r, true); });
  }
  if (r.minimal_depth.tracked) {
    files.write_with("stability_frequency_minimal_depth.csv",
                     [&](std::ostream& o) { write_frequency_csv(o, r, false); });
  }
}

struct StabilityCmd {
  DataFlags data;
  ForestFlags forest;
  StabilityFlags st;

  void add(CLI::App* app) {
    data.add(app);
    forest.add(app);
    st.add(app, true);
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    const auto report = st.compute(ds, forest.params(g.seed), g);
    Outputs files(g.out_dir);
    write_stability_files(files, report);
    Params p;
    data.record(p);
    forest.record(p);
    st.record(p, true);
    write_manifest("stability", g, p, files);
    write_stability_text(out, report);
  }
};

// ---------------------------------------------------------------- baseline

struct BaselineCmd {
  DataFlags data;
  std::string scheme = "all";
  int resamples = 700;
  int folds = 10;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--scheme", scheme, "bootstrap_oob, kfold, loocv or all")
        ->check(CLI::IsMember({"bootstrap_oob", "kfold", "loocv", "all"}))
        ->capture_default_str();
    app->add_option("--resamples", resamples, "Bootstrap resamples")->capture_default_str();
    app->add_option("--folds", folds, "Folds for kfold")->capture_default_str();
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    const auto model = fit_ols(ds);
    std::vector<OlsScheme> schemes;
    if (scheme == "all") {
      schemes = {OlsScheme::BootstrapOob, OlsScheme::KFold, OlsScheme::Loocv};
    } else {
      schemes = {parse_ols_scheme(scheme)};
    }
    std::vector<OlsEvaluation> evals;
    for (auto s : schemes) {
      OlsEvaluationOptions opt;
      opt.scheme = s;
      opt.resamples = resamples;
      opt.folds = folds;
      opt.seed = g.seed;
      opt.threads = g.threads;
      evals.push_back(evaluate_ols(ds, opt));
    }
    Outputs files(g.out_dir);
    files.write_with("ols_coefficients.csv", [&](std::ostream& o) { write_coefficients_csv(o, model); });
    files.write_with("ols_evaluation.csv", [&](std::ostream& o) { write_ols_evaluation_csv(o, evals); });
    Params p;
    data.record(p);
    p.set("--scheme", scheme);
    p.set("--resamples", resamples);
    p.set("--folds", folds);
    write_manifest("baseline", g, p, files);

    out << "OLS baseline (" << model.coefficients().size() << " coefficients)\n";
    for (const auto& e : evals) {
      out << "  " << to_string(e.scheme) << ": R2 = " << format_number(100.0 * e.r2, 5) << " %";
      if (e.skipped_rank_deficient > 0) out << " (" << e.skipped_rank_deficient << " rank-deficient refits skipped)";
      out << '\n';
    }
  }
};

// ---------------------------------------------------------------- predict

std::string guidance_label(double gap, double band) {
  if (gap > band) return "under";
  if (gap < -band) return "over";
  return "fair";
}

struct PredictCmd {
  std::string model;
  std::string input;
  std::vector<std::string> bps;
  std::vector<double> guidance;
  double band = 1.0;
  std::string output = "predictions.csv";
  std::map<std::string, std::string> record;  // feature name -> flag value

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model file")->required();
    app->add_option("--input", input, "CSV of new records (response column optional)");
    app->add_option("--bps-columns", bps, "Continuous columns given in basis points");
    app->add_option("--guidance", guidance, "Price guidance spread(s), one value or one per record");
    app->add_option("--band", band, "Half-width of the 'fair' band, percentage points")->capture_default_str();
    app->add_option("--output", output, "Output CSV name")->capture_default_str();
    const auto schema = Schema::canonical();
    for (const auto& f : schema.features()) {
      std::string flag = "--" + f.name;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option_function<std::string>(
          flag, [this, name = f.name](const std::string& v) { record[name] = v; },
          f.is_categorical() ? "Level of " + f.name : f.name + " (" + f.unit + ")");
    }
  }

  Eigen::MatrixXd records(const Schema& schema) const {
    if (!input.empty()) {
      if (!record.empty()) throw DataError("give either --input or single-record flags, not both");
      std::ifstream in(input, std::ios::binary);
      if (!in) throw IoError("cannot read '" + input + "'");
      return parse_predictor_csv(in, schema, unit_options(bps));
    }
    if (record.empty()) throw DataError("no records: pass --input or the single-record flags");
    Eigen::MatrixXd x(1, schema.num_features());
    for (int p = 0; p < schema.num_features(); ++p) {
      const auto& f = schema.feature(p);
      const auto it = record.find(f.name);
      if (it == record.end()) throw SchemaMismatchError("missing value for '" + f.name + "'");
      if (f.is_categorical()) {
        const auto level = schema.find_level(p, it->second);
        if (!level) throw SchemaMismatchError("unknown level '" + it->second + "' for '" + f.name + "'");
        x(0, p) = *level;
      } else {
        try {
          std::size_t used = 0;
          x(0, p) = std::stod(it->second, &used);
          if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::logic_error&) {
          throw DataError("'" + f.name + "' is not a number: '" + it->second + "'");
        }
        if (std::find(bps.begin(), bps.end(), f.name) != bps.end()) x(0, p) /= 100.0;
      }
    }
    const Eigen::VectorXd row = x.row(0).transpose();
    validate_predictors(schema, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), 1);
    return x;
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto f = load_forest(model);
    const auto x = records(f.schema());
    const auto n = static_cast<std::size_t>(x.rows());
    if (!guidance.empty() && guidance.size() != 1 && guidance.size() != n) {
      throw DataError("--guidance needs one value or one per record (" + std::to_string(n) + ")");
    }
    std::ostringstream csv;
    csv << "record,prediction";
    if (!guidance.empty()) csv << ",guidance,gap,label";
    csv << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd row = x.row(static_cast<Eigen::Index>(i)).transpose();
      const double pred = f.predict(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      csv << i + 1 << ',' << format_number(pred, 12);
      out << "record " << i + 1 << ": predicted spread " << format_number(pred, 6) << " %";
      if (!guidance.empty()) {
        const double gd = guidance.size() == 1 ? guidance[0] : guidance[i];
        const double gap = pred - gd;
        const auto label = guidance_label(gap, band);
        csv << ',' << format_number(gd, 12) << ',' << format_number(gap, 12) << ',' << label;
        out << ", guidance " << format_number(gd, 6) << " %, gap " << format_number(gap, 4) << " pp -> " << label;
      }
      csv << '\n';
      out << '\n';
    }
    Outputs files(g.out_dir);
    files.write(output, csv.str());
    Params p;
    p.set("--model", model);
    p.input("model", model);
    if (!input.empty()) {
      p.set("--input", input);
      p.input("input", input);
    }
    p.set_list("--bps-columns", bps);
    for (double v : guidance) p.set("--guidance", v);
    p.set("--band", band);
    p.set("--output", output);
    for (const auto& [name, value] : record) {
      std::string flag = "--" + name;
      std::replace(flag.begin(), flag.end(), '_', '-');
      p.set(flag, value);
    }
    write_manifest("predict", g, p, files);
  }
};

// ---------------------------------------------------------------- report

struct ReportCmd {
  std::string model;
  DataFlags data;
  ImportanceFlags imp;
  std::string ntree_grid;
  std::string mtry_grid;
  int folds = 5;
  StabilityFlags st;
  bool stability = false;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model file")->required();
    data.add(app);
    imp.add(app);
    app->add_option("--scan", ntree_grid, "Forest sizes for oob_convergence.csv, e.g. 50,100,700");
    app->add_option("--tune-grid", mtry_grid, "mtry grid for mtry_curve.csv, e.g. 1-9");
    app->add_option("--tune-folds", folds, "Folds for the mtry curve")->capture_default_str();
    st.iterations = 0;
    st.add(app, false);
  }

  void run(const Globals& g, std::ostream& out) const {
    const auto ds = data.load();
    const auto f = load_model_for(model, ds);
    const auto ev = oob_predict(f, ds);
    auto params = f.params();
    Outputs files(g.out_dir);

    const auto table = imp.compute(f, ds, g);
    files.write_with("importance.csv", [&](std::ostream& o) { write_importance_csv(o, table); });
    files.write_with("ranking.csv", [&](std::ostream& o) { write_ranking_csv(o, table); });
    files.write_with("train_report.csv", [&](std::ostream& o) { write_train_report(o, f, ev); });

    std::vector<NtreeScanRow> scan;
    if (!ntree_grid.empty()) {
      const auto ks = parse_int_list(ntree_grid, "--scan");
      scan = ntree_scan(ds, ks, params, g.threads);
      files.write_with("oob_convergence.csv", [&](std::ostream& o) { write_ntree_scan_csv(o, scan); });
    }
    std::optional<MtrySearchResult> curve;
    if (!mtry_grid.empty()) {
      MtrySearchOptions opt;
      opt.grid = parse_int_list(mtry_grid, "--tune-grid");
      opt.folds = folds;
      opt.fixed = params;
      opt.seed = g.seed;
      opt.threads = g.threads;
      curve = grid_search_mtry(ds, opt);
      files.write_with("mtry_curve.csv", [&](std::ostream& o) { write_mtry_curve_csv(o, *curve); });
    }
    std::optional<StabilityReport> stab;
    if (st.iterations > 0) {
      auto sf = st;
      sf.method = imp.method;
      sf.score = imp.score;
      sf.reps = imp.reps;
      stab = sf.compute(ds, params, g);
      write_stability_files(files, *stab);
    }

    std::ostringstream md;
    md << "# Spread model report\n\n";
    md << "## Forest\n\n| quantity | value |\n|---|---|\n";
    md << "| N | " << f.n_train() << " |\n| P | " << f.schema().num_features() << " |\n| K | " << f.num_trees()
       << " |\n| mtry | " << params.mtry << " |\n| node size | " << params.node_size << " |\n| MSE_OOB | "
       << format_number(ev.mse_oob, 6) << " |\n| R2_OOB | " << format_number(100.0 * ev.r2_oob, 5) << " % |\n\n";
    md << "## Variable importance\n\n```\n";
    write_ranking_text(md, table);
    md << "```\n";
    if (!scan.empty()) {
      md << "\n## Out-of-bag convergence\n\n| K | MSE_OOB | R2_OOB (%) |\n|---|---|---|\n";
      for (const auto& r : scan) {
        md << "| " << r.n_trees << " | " << format_number(r.mse_oob, 6) << " | " << format_number(100.0 * r.r2_oob, 5)
           << " |\n";
      }
    }
    if (curve) {
      md << "\n## mtry curve\n\n| mtry | CV R2 (%) |\n|---|---|\n";
      for (const auto& pt : curve->curve) {
        md << "| " << pt.mtry << (pt.mtry == curve->chosen_mtry ? " (chosen)" : "") << " | "
           << format_number(100.0 * pt.cv_r2, 5) << " |\n";
      }
    }
    if (stab) {
      md << "\n## Split-half stability\n\n```\n";
      write_stability_text(md, *stab);
      md << "```\n";
    }
    files.write("summary.md", md.str());

    Params p;
    p.set("--model", model);
    p.input("model", model);
    data.record(p);
    imp.record(p);
    if (!ntree_grid.empty()) p.set("--scan", ntree_grid);
    if (!mtry_grid.empty()) p.set("--tune-grid", mtry_grid);
    p.set("--tune-folds", folds);
    st.record(p, false);
    write_manifest("report", g, p, files);
    out << "report written to " << g.out_dir << '\n';
  }
};

// ---------------------------------------------------------------- replay

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ReplayCmd {
  std::string manifest;
  bool verify = true;

  void add(CLI::App* app) {
    app->add_option("manifest", manifest, "Manifest JSON written by an earlier run")->required();
    app->add_flag("!--no-verify", verify, "Do not compare output digests with the manifest");
  }

  int run(const Globals& g, bool out_dir_given, bool threads_given, std::ostream& out, std::ostream& err) const {
    json m;
    try {
      m = json::parse(read_file(manifest));
    } catch (const json::exception& e) {
      throw DataError("malformed manifest: " + std::string(e.what()));
    }
    std::vector<std::string> args;
    try {
      args.push_back(m.at("command").get<std::string>());
      args.push_back("--seed=" + std::to_string(m.at("seed").get<std::uint64_t>()));
      args.push_back("--threads=" + std::to_string(threads_given ? g.threads : m.at("threads").get<int>()));
      const auto dir = out_dir_given ? g.out_dir : m.at("out_dir").get<std::string>();
      args.push_back("--out-dir=" + dir);
      for (const auto& kv : m.at("parameters")) {
        args.push_back(kv.at(0).get<std::string>() + "=" + kv.at(1).get<std::string>());
      }
      for (const auto& [role, in] : m.at("inputs").items()) {
        const auto path = in.at("path").get<std::string>();
        if (fnv1a_hex(read_file(path)) != in.at("fnv1a64").get<std::string>()) {
          throw DataError("input '" + path + "' changed since the manifest was written");
        }
      }
      const int code = run_impl(args, out, err);
      if (code != kOk || !verify) return code;
      int mismatched = 0;
      for (const auto& [name, digest] : m.at("outputs").items()) {
        const auto path = (fs::path(dir) / name).string();
        if (fnv1a_hex(read_file(path)) != digest.get<std::string>()) {
          err << "output differs from manifest: " << path << '\n';
          ++mismatched;
        }
      }
      if (mismatched > 0) throw InvariantError("replay did not reproduce " + std::to_string(mismatched) + " output(s)");
      out << "replay reproduced " << m.at("outputs").size() << " output(s)\n";
      return kOk;
    } catch (const json::exception& e) {
      throw DataError("malformed manifest: " + std::string(e.what()));
    }
  }
};

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Catastrophe bond spread modelling with random forests", "catbond"};
  app.set_version_flag("--version", CATBOND_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  auto* threads_opt = app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
                          ->capture_default_str();
  auto* out_dir_opt = app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();

  GenDataCmd gen;
  TrainCmd train;
  TuneCmd tune;
  ImportanceCmd importance;
  StabilityCmd stability;
  BaselineCmd baseline;
  PredictCmd predict;
  ReportCmd report;
  ReplayCmd replay;
  auto* gen_app = app.add_subcommand("gen-data", "Generate a synthetic bond dataset");
  auto* train_app = app.add_subcommand("train", "Fit a forest and report out-of-bag accuracy");
  auto* tune_app = app.add_subcommand("tune", "Cross-validate mtry and scan forest sizes");
  auto* imp_app = app.add_subcommand("importance", "Permutation and minimal-depth importance");
  auto* stab_app = app.add_subcommand("stability", "Split-half stability analysis");
  auto* base_app = app.add_subcommand("baseline", "OLS baseline");
  auto* pred_app = app.add_subcommand("predict", "Predict spreads for new bonds");
  auto* rep_app = app.add_subcommand("report", "Full analysis bundle for a trained model");
  auto* replay_app = app.add_subcommand("replay", "Re-run a command from its manifest");
  gen.add(gen_app);
  train.add(train_app);
  tune.add(tune_app);
  importance.add(imp_app);
  stability.add(stab_app);
  baseline.add(base_app);
  predict.add(pred_app);
  report.add(rep_app);
  replay.add(replay_app);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kDataError;
  }
  if (g.threads < 1) throw DataError("--threads must be >= 1");

  if (*gen_app) gen.run(g, out);
  else if (*train_app) train.run(g, out);
  else if (*tune_app) tune.run(g, out);
  else if (*imp_app) importance.run(g, out);
  else if (*stab_app) stability.run(g, out);
  else if (*base_app) baseline.run(g, out);
  else if (*pred_app) predict.run(g, out);
  else if (*rep_app) report.run(g, out);
  else if (*replay_app) return replay.run(g, out_dir_opt->count() > 0, threads_opt->count() > 0, out, err);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_impl(args, out, err);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return kInvariantError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInvariantError;
  }
}

}  // namespace catbond::cli
