#include "catbond/synth.hpp"

#include "catbond/error.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>

namespace catbond::synth {

using json = nlohmann::json;

double QuantileAnchors::quantile(double u) const {
  const auto it = std::upper_bound(probs.begin(), probs.end(), u);
  if (it == probs.begin()) return values.front();
  if (it == probs.end()) return values.back();
  const auto hi = static_cast<std::size_t>(it - probs.begin());
  const auto lo = hi - 1;
  const double t = (u - probs[lo]) / (probs[hi] - probs[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double QuantileAnchors::cdf(double x) const {
  if (x <= values.front()) return 0.0;
  if (x >= values.back()) return 1.0;
  const auto it = std::upper_bound(values.begin(), values.end(), x);
  const auto hi = static_cast<std::size_t>(it - values.begin());
  const auto lo = hi - 1;
  const double t = (x - values[lo]) / (values[hi] - values[lo]);
  return probs[lo] + t * (probs[hi] - probs[lo]);
}

void QuantileAnchors::validate(const std::string& what) const {
  if (probs.size() < 2 || probs.size() != values.size()) throw DataError(what + ": need >= 2 matched anchors");
  if (probs.front() != 0.0 || probs.back() != 1.0) throw DataError(what + ": anchor probabilities must span [0, 1]");
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (!(probs[i] > probs[i - 1]) || !(values[i] > values[i - 1])) {
      throw DataError(what + ": anchors must be strictly increasing");
    }
  }
}

double ContinuousTarget::cdf(double x) const {
  double f = 0.0;
  for (const auto& c : components) f += c.weight * c.anchors.cdf(x);
  return f;
}

double ContinuousTarget::sample(Rng& rng) const {
  std::size_t k = 0;
  if (components.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (k = 0; k + 1 < components.size(); ++k) {
      acc += components[k].weight;
      if (u < acc) break;
    }
  }
  return components[k].anchors.quantile(rng.uniform());
}

void ContinuousTarget::validate(const std::string& what) const {
  if (components.empty()) throw DataError(what + ": no mixture components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw DataError(what + ": mixture weights must be positive");
    c.anchors.validate(what);
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError(what + ": mixture weights must sum to 1");
}

double default_ground_truth(const BondRecord& r) {
  using G = NonlinearGroundTruth;
  double s = G::kIntercept + G::kEl * r.el + G::kAp * r.ap - G::kLogSizeSlope * std::abs(std::log(r.size / G::kSizePivot));
  s += G::kDiversifierOffset[static_cast<std::size_t>(r.diversifier)];
  if (r.trigger == Trigger::Indemnity && r.coverage == Coverage::Aggregate) s += G::kIndemnityAggregateBump;
  return s;
}

double GroundTruth::evaluate(const BondRecord& r) const {
  if (kind == GroundTruthKind::Nonlinear) return default_ground_truth(r);
  return linear.intercept + linear.ap * r.ap + linear.el * r.el + linear.size * r.size + linear.term * r.term +
         linear.diversifier_offset[static_cast<std::size_t>(r.diversifier)];
}

QuantileAnchors reference_quartiles(int feature) {
  const std::vector<double> q{0.0, 0.25, 0.5, 0.75, 1.0};
  switch (feature) {
    case bond::kAp:
      return {q, {0.02, 1.36, 2.51, 4.68, 25.04}};
    case bond::kEl:
      return {q, {0.01, 1.11, 1.88, 3.34, 17.35}};
    case bond::kSize:
      return {q, {3.0, 75.0, 130.0, 200.0, 1500.0}};
    case bond::kTerm:
      return {q, {1.00, 3.02, 3.18, 4.02, 5.12}};
    default:
      throw DataError("no reference quartiles for feature " + std::to_string(feature));
  }
}

std::vector<double> reference_level_shares(int feature) {
  std::vector<double> counts;
  switch (feature) {
    case bond::kCoverage:
      // 303 aggregate + 627 occurrence leaves 4 bonds with both coverages.
      counts = {303, 627, 4};
      break;
    case bond::kDiversifier:
      counts = {73, 66, 528, 80, 184, 3};
      break;
    case bond::kRatingStatus:
      counts = {435, 499};
      break;
    case bond::kTrigger:
      counts = {511, 29, 325, 23, 22, 24};
      break;
    case bond::kVendor:
      counts = {741, 4, 42, 141, 6};
      break;
    default:
      throw DataError("no reference level shares for feature " + std::to_string(feature));
  }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (auto& c : counts) c /= total;
  return counts;
}

GeneratorConfig GeneratorConfig::calibrated() {
  GeneratorConfig cfg;
  for (int p : {bond::kAp, bond::kEl, bond::kSize}) cfg.continuous[p] = {{{1.0, reference_quartiles(p)}}};

  // Term is bimodal: a short-dated half peaking just above three years and a
  // long-dated half with a second mode near five. Each half passes through the
  // reference quartiles; the extra anchor only reshapes the top quarter.
  QuantileAnchors short_dated{{0.0, 0.5, 1.0}, {1.00, 3.02, 3.18}};
  QuantileAnchors long_dated{{0.0, 0.5, 0.7, 1.0}, {3.18, 4.02, 4.60, 5.12}};
  cfg.continuous[bond::kTerm] = {{{0.5, short_dated}, {0.5, long_dated}}};

  for (int p = bond::kCoverage; p < bond::kNumFeatures; ++p) cfg.level_probabilities[p] = reference_level_shares(p);
  return cfg;
}

GeneratorConfig GeneratorConfig::planted() {
  auto cfg = calibrated();
  cfg.ground_truth.kind = GroundTruthKind::Linear;
  cfg.ground_truth.linear.intercept = 1.0;
  cfg.ground_truth.linear.el = 1.0;
  cfg.ground_truth.linear.ap = 0.2;
  cfg.ground_truth.linear.diversifier_offset = {-1.5, -1.0, 0.0, 1.0, 1.5, 0.5};
  cfg.noise_sd = 1.5;
  return cfg;
}

void GeneratorConfig::validate() const {
  if (n < 1) throw DataError("generator needs n >= 1");
  if (!(noise_sd >= 0.0)) throw DataError("noise_sd must be non-negative");
  const auto schema = Schema::canonical();
  for (int p = 0; p < bond::kNumFeatures; ++p) {
    const auto& f = schema.feature(p);
    if (f.is_categorical()) {
      const auto it = level_probabilities.find(p);
      if (it == level_probabilities.end()) throw DataError("no level probabilities for " + f.name);
      if (it->second.size() != f.levels.size()) throw DataError(f.name + ": one probability per level required");
      double total = 0.0;
      for (double w : it->second) {
        if (!(w >= 0.0)) throw DataError(f.name + ": negative level probability");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9) throw DataError(f.name + ": level probabilities must sum to 1");
    } else {
      const auto it = continuous.find(p);
      if (it == continuous.end()) throw DataError("no marginal target for " + f.name);
      it->second.validate(f.name);
      for (const auto& c : it->second.components) {
        if (!f.bounds.contains(c.anchors.values.front()) || !f.bounds.contains(c.anchors.values.back())) {
          throw DataError(f.name + ": anchors outside " + f.bounds.describe());
        }
      }
    }
  }
}

Dataset generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const auto schema = Schema::canonical();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  Eigen::MatrixXd x(n, bond::kNumFeatures);
  Eigen::VectorXd y(n);
  Rng rng(derive_seed(cfg.master_seed, {0x5eedULL}));

  std::map<int, std::vector<double>> cumulative;
  for (const auto& [p, probs] : cfg.level_probabilities) {
    auto& c = cumulative[p];
    std::partial_sum(probs.begin(), probs.end(), std::back_inserter(c));
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    for (int p = 0; p < bond::kNumFeatures; ++p) {
      if (schema.feature(p).is_categorical()) {
        const auto& c = cumulative.at(p);
        const double u = rng.uniform() * c.back();
        std::size_t level = 0;
        while (level + 1 < c.size() && !(u < c[level])) ++level;
        x(i, p) = static_cast<double>(level);
      } else {
        x(i, p) = cfg.continuous.at(p).sample(rng);
      }
    }
    const Eigen::VectorXd row = x.row(i);
    const auto record = BondRecord::from_predictors(std::span<const double>(row.data(), row.size()));
    const double noise = cfg.noise_sd > 0.0 ? cfg.noise_sd * rng.normal() : 0.0;
    y(i) = std::max(0.0, cfg.ground_truth.evaluate(record) + noise);
  }
  return Dataset(schema, std::move(x), std::move(y), "synthetic seed=" + std::to_string(cfg.master_seed));
}

namespace {

json anchors_to_json(const QuantileAnchors& a) { return {{"probs", a.probs}, {"values", a.values}}; }

QuantileAnchors anchors_from_json(const json& j) {
  return {j.at("probs").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
}

}  // namespace

std::string GeneratorConfig::to_json_text() const {
  const auto schema = Schema::canonical();
  json j;
  j["n"] = n;
  j["master_seed"] = master_seed;
  j["noise_sd"] = noise_sd;
  for (const auto& [p, target] : continuous) {
    json comps = json::array();
    for (const auto& c : target.components) comps.push_back({{"weight", c.weight}, {"anchors", anchors_to_json(c.anchors)}});
    j["continuous"][schema.feature(p).name] = comps;
  }
  for (const auto& [p, probs] : level_probabilities) j["level_probabilities"][schema.feature(p).name] = probs;
  auto& gt = j["ground_truth"];
  if (ground_truth.kind == GroundTruthKind::Nonlinear) {
    gt["kind"] = "nonlinear";
  } else {
    const auto& l = ground_truth.linear;
    gt = {{"kind", "linear"}, {"intercept", l.intercept}, {"ap", l.ap}, {"el", l.el},
          {"size", l.size},   {"term", l.term},           {"diversifier_offset", l.diversifier_offset}};
  }
  return j.dump(2);
}

GeneratorConfig GeneratorConfig::from_json_text(const std::string& text) {
  const auto schema = Schema::canonical();
  try {
    const auto j = json::parse(text);
    GeneratorConfig cfg;
    cfg.n = j.at("n").get<std::size_t>();
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    cfg.noise_sd = j.at("noise_sd").get<double>();
    for (const auto& [name, comps] : j.at("continuous").items()) {
      const auto p = schema.find_feature(name);
      if (!p) throw DataError("unknown feature '" + name + "' in generator config");
      ContinuousTarget t;
      for (const auto& c : comps) t.components.push_back({c.at("weight").get<double>(), anchors_from_json(c.at("anchors"))});
      cfg.continuous[*p] = std::move(t);
    }
    for (const auto& [name, probs] : j.at("level_probabilities").items()) {
      const auto p = schema.find_feature(name);
      if (!p) throw DataError("unknown feature '" + name + "' in generator config");
      cfg.level_probabilities[*p] = probs.get<std::vector<double>>();
    }
    const auto& gt = j.at("ground_truth");
    if (gt.at("kind") == "linear") {
      cfg.ground_truth.kind = GroundTruthKind::Linear;
      auto& l = cfg.ground_truth.linear;
      l.intercept = gt.at("intercept").get<double>();
      l.ap = gt.at("ap").get<double>();
      l.el = gt.at("el").get<double>();
      l.size = gt.at("size").get<double>();
      l.term = gt.at("term").get<double>();
      l.diversifier_offset = gt.at("diversifier_offset").get<std::array<double, 6>>();
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed generator config: ") + e.what());
  }
}

}  // namespace catbond::synth
