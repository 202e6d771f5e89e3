#include "catbond/model_io.hpp"

#include "catbond/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace catbond {

using json = nlohmann::json;

std::string forest_to_json_text(const Forest& f) {
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["schema"] = json::parse(f.schema().to_json_text());
  j["schema_fingerprint"] = f.schema_fingerprint();
  const auto& p = f.params();
  j["params"] = {{"n_trees", p.n_trees},
                 {"mtry", p.mtry},
                 {"node_size", p.node_size},
                 {"max_depth", p.max_depth},
                 {"master_seed", p.master_seed}};
  j["n_train"] = f.n_train();
  json trees = json::array();
  for (const auto& t : f.trees()) {
    json nodes = json::array();
    // [feature, categorical, threshold, left_levels, left, right, depth, value, count]
    for (const auto& n : t.nodes()) {
      nodes.push_back(json::array({n.rule.feature, n.rule.categorical, n.rule.threshold, n.rule.left_levels, n.left,
                                   n.right, n.depth, n.value, n.count}));
    }
    trees.push_back({{"inbag", std::vector<int>(t.inbag().begin(), t.inbag().end())}, {"nodes", std::move(nodes)}});
  }
  j["trees"] = std::move(trees);
  return j.dump() + "\n";
}

Forest forest_from_json_text(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (j.at("format").get<std::string>() != kModelFormat) throw DataError("not a forest model document");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw DataError("unsupported model format version " + j.at("version").dump());
    }
    auto schema = Schema::from_json_text(j.at("schema").dump());
    if (schema.fingerprint() != j.at("schema_fingerprint").get<std::string>()) {
      throw DataError("model schema fingerprint does not match its schema");
    }
    ForestParams params;
    const auto& pj = j.at("params");
    params.n_trees = pj.at("n_trees").get<int>();
    params.mtry = pj.at("mtry").get<int>();
    params.node_size = pj.at("node_size").get<int>();
    params.max_depth = pj.at("max_depth").get<int>();
    params.master_seed = pj.at("master_seed").get<std::uint64_t>();
    std::vector<RegressionTree> trees;
    for (const auto& tj : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& a : tj.at("nodes")) {
        if (a.size() != 9) throw DataError("tree node must have 9 fields");
        TreeNode n;
        n.rule.feature = a[0].get<int>();
        n.rule.categorical = a[1].get<bool>();
        n.rule.threshold = a[2].get<double>();
        n.rule.left_levels = a[3].get<std::uint64_t>();
        n.left = a[4].get<int>();
        n.right = a[5].get<int>();
        n.depth = a[6].get<int>();
        n.value = a[7].get<double>();
        n.count = a[8].get<int>();
        nodes.push_back(n);
      }
      trees.emplace_back(std::move(nodes), tj.at("inbag").get<std::vector<int>>());
    }
    return Forest(std::move(schema), params, j.at("n_train").get<Eigen::Index>(), std::move(trees));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  } catch (const InvariantError& e) {
    throw DataError(std::string("model document violates tree invariants: ") + e.what());
  }
}

void save_forest(const Forest& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out << forest_to_json_text(f);
  if (!out) throw IoError("failed writing model file '" + path + "'");
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return forest_from_json_text(ss.str());
}

}  // namespace catbond
