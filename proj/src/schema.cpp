#include "catbond/schema.hpp"

#include "catbond/digest.hpp"
#include "catbond/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace catbond {

using Eigen::Index;
using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string level_key(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c == ' ' || c == '_' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Comma-separated fields with optional double-quoting ("" escapes a quote).
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

json bounds_to_json(const Bounds& b) {
  json j;
  j["lo"] = std::isfinite(b.lo) ? json(b.lo) : json(nullptr);
  j["hi"] = std::isfinite(b.hi) ? json(b.hi) : json(nullptr);
  j["lo_open"] = b.lo_open;
  j["hi_open"] = b.hi_open;
  return j;
}

Bounds bounds_from_json(const json& j) {
  Bounds b;
  if (!j.at("lo").is_null()) b.lo = j.at("lo").get<double>();
  if (!j.at("hi").is_null()) b.hi = j.at("hi").get<double>();
  b.lo_open = j.at("lo_open").get<bool>();
  b.hi_open = j.at("hi_open").get<bool>();
  return b;
}

json feature_to_json(const Feature& f) {
  json j;
  j["name"] = f.name;
  j["unit"] = f.unit;
  if (f.is_categorical()) {
    j["kind"] = "categorical";
    j["levels"] = f.levels;
  } else {
    j["kind"] = "continuous";
    j["bounds"] = bounds_to_json(f.bounds);
  }
  return j;
}

Feature feature_from_json(const json& j) {
  Feature f;
  f.name = j.at("name").get<std::string>();
  f.unit = j.at("unit").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    f.kind = FeatureKind::Categorical;
    f.levels = j.at("levels").get<std::vector<std::string>>();
  } else if (kind == "continuous") {
    f.bounds = bounds_from_json(j.at("bounds"));
  } else {
    throw DataError("unknown feature kind '" + kind + "'");
  }
  return f;
}

Feature continuous(std::string name, std::string unit, Bounds bounds) {
  Feature f;
  f.name = std::move(name);
  f.unit = std::move(unit);
  f.bounds = bounds;
  return f;
}

Feature categorical(std::string name, std::vector<std::string> levels) {
  Feature f;
  f.name = std::move(name);
  f.kind = FeatureKind::Categorical;
  f.levels = std::move(levels);
  f.unit = "level";
  return f;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string Bounds::describe() const {
  std::ostringstream os;
  os << (lo_open ? "(" : "[") << format_double(lo) << ", " << format_double(hi) << (hi_open ? ")" : "]");
  return os.str();
}

Schema::Schema(Feature response, std::vector<Feature> features)
    : response_(std::move(response)), features_(std::move(features)) {
  if (response_.is_categorical()) throw DataError("response must be continuous");
  if (features_.empty()) throw DataError("schema needs at least one predictor");
  std::set<std::string> names{lower(response_.name)};
  for (const auto& f : features_) {
    if (!names.insert(lower(f.name)).second) throw DataError("duplicate column name '" + f.name + "'");
    if (!f.is_categorical()) continue;
    if (f.levels.empty()) throw DataError("feature '" + f.name + "' has no levels");
    if (f.levels.size() > 63) throw DataError("feature '" + f.name + "' has more than 63 levels");
    std::set<std::string> seen;
    for (const auto& l : f.levels) {
      if (!seen.insert(level_key(l)).second) throw DataError("feature '" + f.name + "' repeats level '" + l + "'");
    }
  }
}

Schema Schema::canonical() {
  const Bounds nonneg{0.0, kInf, false, false};
  const Bounds percent{0.0, 100.0, false, false};
  const Bounds positive{0.0, kInf, true, false};
  std::vector<Feature> f;
  f.push_back(continuous("ap", "percent", percent));
  f.push_back(continuous("el", "percent of size", percent));
  f.push_back(continuous("size", "USD million", positive));
  f.push_back(continuous("term", "years", positive));
  f.push_back(categorical("coverage", {"aggregate", "occurrence", "both"}));
  f.push_back(categorical("diversifier", {"APAC", "Europe", "MultiPeril", "NAQuake", "NAWind", "SAQuake"}));
  f.push_back(categorical("rating_status", {"rated", "not_rated"}));
  f.push_back(categorical("trigger",
                          {"indemnity", "pure_parametric", "industry_loss_index", "parametric_index", "model", "multiple"}));
  f.push_back(categorical("vendor", {"AIR", "AON", "EQECAT", "RMS", "pp"}));
  return Schema(continuous("spread", "percent of size", nonneg), std::move(f));
}

std::optional<int> Schema::find_feature(std::string_view name) const {
  const auto key = lower(name);
  for (int p = 0; p < num_features(); ++p) {
    if (lower(features_[static_cast<std::size_t>(p)].name) == key) return p;
  }
  return std::nullopt;
}

std::optional<int> Schema::find_level(int p, std::string_view level) const {
  const auto& levels = feature(p).levels;
  const auto key = level_key(level);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (level_key(levels[i]) == key) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string Schema::to_json_text() const {
  json j;
  j["response"] = feature_to_json(response_);
  j["features"] = json::array();
  for (const auto& f : features_) j["features"].push_back(feature_to_json(f));
  return j.dump();
}

Schema Schema::from_json_text(std::string_view text) {
  try {
    const auto j = json::parse(text);
    std::vector<Feature> features;
    for (const auto& f : j.at("features")) features.push_back(feature_from_json(f));
    return Schema(feature_from_json(j.at("response")), std::move(features));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed schema document: ") + e.what());
  }
}

std::string Schema::fingerprint() const { return fnv1a_hex(to_json_text()); }

Eigen::VectorXd BondRecord::predictors() const {
  Eigen::VectorXd x(bond::kNumFeatures);
  x << ap, el, size, term, static_cast<int>(coverage), static_cast<int>(diversifier), static_cast<int>(rating_status),
      static_cast<int>(trigger), static_cast<int>(vendor);
  return x;
}

BondRecord BondRecord::from_predictors(std::span<const double> row, double spread) {
  if (row.size() != static_cast<std::size_t>(bond::kNumFeatures)) throw SchemaMismatchError("expected 9 predictors");
  BondRecord r;
  r.spread = spread;
  r.ap = row[bond::kAp];
  r.el = row[bond::kEl];
  r.size = row[bond::kSize];
  r.term = row[bond::kTerm];
  r.coverage = static_cast<Coverage>(static_cast<int>(row[bond::kCoverage]));
  r.diversifier = static_cast<Diversifier>(static_cast<int>(row[bond::kDiversifier]));
  r.rating_status = static_cast<RatingStatus>(static_cast<int>(row[bond::kRatingStatus]));
  r.trigger = static_cast<Trigger>(static_cast<int>(row[bond::kTrigger]));
  r.vendor = static_cast<Vendor>(static_cast<int>(row[bond::kVendor]));
  return r;
}

void validate_predictors(const Schema& schema, std::span<const double> row, std::size_t row_number) {
  if (row.size() != static_cast<std::size_t>(schema.num_features())) {
    throw SchemaMismatchError("row " + std::to_string(row_number) + " has " + std::to_string(row.size()) +
                              " predictors, schema has " + std::to_string(schema.num_features()));
  }
  for (int p = 0; p < schema.num_features(); ++p) {
    const auto& f = schema.feature(p);
    const double v = row[static_cast<std::size_t>(p)];
    if (!std::isfinite(v)) throw ParseError(row_number, f.name, "missing or non-finite value");
    if (f.is_categorical()) {
      if (v != std::floor(v) || v < 0 || v >= f.num_levels()) {
        throw ParseError(row_number, f.name, "level index " + format_double(v) + " out of range");
      }
    } else if (!f.bounds.contains(v)) {
      throw ParseError(row_number, f.name, "value " + format_double(v) + " outside " + f.bounds.describe());
    }
  }
}

Dataset::Dataset(Schema schema, Eigen::MatrixXd x, Eigen::VectorXd y, std::string provenance)
    : schema_(std::move(schema)), x_(std::move(x)), y_(std::move(y)), provenance_(std::move(provenance)) {
  if (y_.size() == 0) throw EmptyDatasetError();
  if (x_.rows() != y_.size() || x_.cols() != schema_.num_features()) {
    throw SchemaMismatchError("feature matrix is " + std::to_string(x_.rows()) + "x" + std::to_string(x_.cols()) +
                              ", expected " + std::to_string(y_.size()) + "x" +
                              std::to_string(schema_.num_features()));
  }
  std::vector<double> row(static_cast<std::size_t>(x_.cols()));
  for (Index i = 0; i < x_.rows(); ++i) {
    for (Index p = 0; p < x_.cols(); ++p) row[static_cast<std::size_t>(p)] = x_(i, p);
    validate_predictors(schema_, row, static_cast<std::size_t>(i + 1));
    const auto& r = schema_.response();
    if (!std::isfinite(y_(i))) throw ParseError(static_cast<std::size_t>(i + 1), r.name, "missing or non-finite value");
    if (!r.bounds.contains(y_(i))) {
      throw ParseError(static_cast<std::size_t>(i + 1), r.name,
                       "value " + format_double(y_(i)) + " outside " + r.bounds.describe());
    }
  }
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Eigen::MatrixXd x(static_cast<Index>(rows.size()), x_.cols());
  Eigen::VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = x_.row(rows[i]);
    y(static_cast<Index>(i)) = y_(rows[i]);
  }
  return Dataset(schema_, std::move(x), std::move(y), provenance_);
}

Dataset Dataset::with_response(Eigen::VectorXd y) const { return Dataset(schema_, x_, std::move(y), provenance_); }

namespace {

struct ParsedTable {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  bool has_response = false;
};

ParsedTable parse_table(std::istream& in, const Schema& schema, const UnitOptions& options, bool response_required) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  // column position -> feature index, or -1 for the response
  std::vector<int> target(header.size());
  std::vector<bool> seen(static_cast<std::size_t>(schema.num_features()), false);
  bool has_response = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (lower(header[c]) == lower(schema.response().name)) {
      if (has_response) throw ParseError(0, header[c], "duplicate column");
      has_response = true;
      target[c] = -1;
      continue;
    }
    const auto p = schema.find_feature(header[c]);
    if (!p) throw ParseError(0, header[c], "unknown column");
    if (seen[static_cast<std::size_t>(*p)]) throw ParseError(0, header[c], "duplicate column");
    seen[static_cast<std::size_t>(*p)] = true;
    target[c] = *p;
  }
  for (int p = 0; p < schema.num_features(); ++p) {
    if (!seen[static_cast<std::size_t>(p)]) throw ParseError(0, schema.feature(p).name, "column missing from header");
  }
  if (response_required && !has_response) throw ParseError(0, schema.response().name, "column missing from header");

  std::vector<bool> bps(header.size(), false);
  for (const auto& name : options.basis_point_columns) {
    bool found = false;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (lower(header[c]) == lower(name)) {
        const bool cat = target[c] >= 0 && schema.feature(target[c]).is_categorical();
        if (cat) throw DataError("basis-point conversion requested for categorical column '" + name + "'");
        bps[c] = true;
        found = true;
      }
    }
    if (!found) throw DataError("basis-point conversion requested for unknown column '" + name + "'");
  }

  std::vector<double> cells;
  std::vector<double> responses;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      const auto& col = fields.size() < header.size() ? header[fields.size()] : std::string("<extra>");
      throw ParseError(row_number, col,
                       "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(static_cast<std::size_t>(schema.num_features()));
    double response = 0.0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto& cell = fields[c];
      if (cell.empty()) throw ParseError(row_number, header[c], "empty cell");
      const int p = target[c];
      if (p >= 0 && schema.feature(p).is_categorical()) {
        const auto level = schema.find_level(p, cell);
        if (!level) throw ParseError(row_number, header[c], "unknown level '" + cell + "'");
        row[static_cast<std::size_t>(p)] = *level;
        continue;
      }
      double v = 0.0;
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(row_number, header[c], "not a number: '" + cell + "'");
      }
      if (bps[c]) v /= 100.0;
      if (p >= 0) {
        row[static_cast<std::size_t>(p)] = v;
      } else {
        response = v;
      }
    }
    validate_predictors(schema, row, row_number);
    if (has_response && !schema.response().bounds.contains(response)) {
      throw ParseError(row_number, schema.response().name,
                       "value " + format_double(response) + " outside " + schema.response().bounds.describe());
    }
    cells.insert(cells.end(), row.begin(), row.end());
    responses.push_back(response);
  }
  if (responses.empty()) throw EmptyDatasetError();

  const auto n = static_cast<Index>(responses.size());
  ParsedTable t;
  t.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cells.data(), n, schema.num_features());
  t.y = Eigen::Map<const Eigen::VectorXd>(responses.data(), n);
  t.has_response = has_response;
  return t;
}

}  // namespace

Dataset parse_csv(std::istream& in, const Schema& schema, const UnitOptions& options) {
  auto t = parse_table(in, schema, options, true);
  return Dataset(schema, std::move(t.x), std::move(t.y));
}

Dataset read_csv_file(const std::string& path, const Schema& schema, const UnitOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  auto t = parse_table(in, schema, options, true);
  return Dataset(schema, std::move(t.x), std::move(t.y), path);
}

Eigen::MatrixXd parse_predictor_csv(std::istream& in, const Schema& schema, const UnitOptions& options) {
  return parse_table(in, schema, options, false).x;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  const auto& schema = ds.schema();
  out << schema.response().name;
  for (const auto& f : schema.features()) out << ',' << f.name;
  out << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    out << format_double(ds.response()(i));
    for (int p = 0; p < schema.num_features(); ++p) {
      const auto& f = schema.feature(p);
      out << ',';
      if (f.is_categorical()) {
        out << f.levels[static_cast<std::size_t>(ds.level(i, p))];
      } else {
        out << format_double(ds.value(i, p));
      }
    }
    out << '\n';
  }
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

ContinuousSummary summarize_column(const Feature& f, const Eigen::VectorXd& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  std::sort(v.begin(), v.end());
  ContinuousSummary s;
  s.name = f.name;
  s.unit = f.unit;
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return s;
}

}  // namespace

SummaryStats summarize(const Dataset& ds) {
  SummaryStats stats;
  const auto& schema = ds.schema();
  stats.continuous.push_back(summarize_column(schema.response(), ds.response()));
  for (int p = 0; p < schema.num_features(); ++p) {
    const auto& f = schema.feature(p);
    if (!f.is_categorical()) {
      stats.continuous.push_back(summarize_column(f, ds.features().col(p)));
      continue;
    }
    CategoricalSummary c;
    c.name = f.name;
    for (const auto& l : f.levels) c.levels.push_back({l, 0, 0.0});
    for (Index i = 0; i < ds.size(); ++i) ++c.levels[static_cast<std::size_t>(ds.level(i, p))].count;
    for (auto& l : c.levels) l.percent = 100.0 * static_cast<double>(l.count) / static_cast<double>(ds.size());
    stats.categorical.push_back(std::move(c));
  }
  return stats;
}

void write_summary(std::ostream& out, const SummaryStats& stats) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %10s %10s %10s %10s %10s %10s\n", "variable", "min", "q1", "median", "mean",
                "q3", "max");
  out << buf;
  for (const auto& c : stats.continuous) {
    std::snprintf(buf, sizeof buf, "%-14s %10.2f %10.2f %10.2f %10.2f %10.2f %10.2f\n", c.name.c_str(), c.min, c.q1,
                  c.median, c.mean, c.q3, c.max);
    out << buf;
  }
  out << '\n';
  for (const auto& c : stats.categorical) {
    for (const auto& l : c.levels) {
      std::snprintf(buf, sizeof buf, "%-14s %-20s %8zu %7.1f%%\n", c.name.c_str(), l.level.c_str(), l.count,
                    l.percent);
      out << buf;
    }
  }
}

double derive_spread(double coupon, double money_market_rate) {
  if (money_market_rate < 0.0) throw DataError("money market rate must be non-negative");
  if (coupon < money_market_rate) {
    throw DataError("negative spread: coupon " + format_double(coupon) + " below money market rate " +
                    format_double(money_market_rate));
  }
  return coupon - money_market_rate;
}

}  // namespace catbond
