#include "calx/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "calx/error.hpp"
#include "json.hpp"

namespace calx {

namespace {

struct BestSplit {
  bool found = false;
  double sse = 0.0;
  std::size_t feature = 0;
  bool categorical = false;
  double threshold = 0.0;
};

double node_sse(double sum, double sumsq, double n) {
  return sumsq - sum * sum / n;
}

}  // namespace

void RegressionTree::fit(const DataTable& table,
                         const std::vector<std::size_t>& indices,
                         const TreeParams& params, Rng& rng) {
  require(!indices.empty(), Errc::EmptyTraining, "tree fit on zero rows");
  require(table.has_targets(), Errc::EmptyTraining,
          "tree fit needs target values");
  nodes_.clear();

  const std::size_t d = table.n_cols();
  std::vector<std::size_t> feature_pool(d);
  for (std::size_t f = 0; f < d; ++f) feature_pool[f] = f;

  struct Work {
    std::size_t node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };

  nodes_.emplace_back();
  std::vector<Work> pending;
  pending.push_back({0, indices, 0});

  // scratch buffers reused across nodes
  std::vector<std::pair<double, double>> sorted;

  while (!pending.empty()) {
    Work work = std::move(pending.back());
    pending.pop_back();
    Node& node = nodes_[work.node];

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t idx : work.rows) {
      const double y = table.target(idx);
      sum += y;
      sumsq += y * y;
    }
    const double n = static_cast<double>(work.rows.size());
    node.n = work.rows.size();
    node.value = sum / n;

    const bool depth_ok =
        params.max_depth == 0 || work.depth < params.max_depth;
    const double parent_sse = node_sse(sum, sumsq, n);
    if (!depth_ok || work.rows.size() < 2 * params.min_leaf ||
        parent_sse <= 0.0) {
      continue;  // leaf
    }

    // candidate features, ascending so equal-SSE ties pick the lowest index
    std::vector<std::size_t> candidates;
    if (params.n_candidate_features == 0 ||
        params.n_candidate_features >= d) {
      candidates = feature_pool;
    } else {
      candidates =
          sample_without_replacement(rng, d, params.n_candidate_features);
      std::sort(candidates.begin(), candidates.end());
    }

    BestSplit best;
    for (std::size_t f : candidates) {
      if (table.schema().is_categorical(f)) {
        // code-equality grouping: left = rows matching one code
        std::map<double, std::pair<double, double>> groups;  // code -> sum,n
        std::map<double, double> groups_sq;
        for (std::size_t idx : work.rows) {
          const double code = table.at(idx, f);
          auto& g = groups[code];
          g.first += table.target(idx);
          g.second += 1.0;
          groups_sq[code] += table.target(idx) * table.target(idx);
        }
        if (groups.size() < 2) continue;
        for (const auto& [code, g] : groups) {
          const double left_n = g.second;
          const double right_n = n - left_n;
          if (left_n < static_cast<double>(params.min_leaf) ||
              right_n < static_cast<double>(params.min_leaf))
            continue;
          const double left_sse = node_sse(g.first, groups_sq[code], left_n);
          const double right_sse =
              node_sse(sum - g.first, sumsq - groups_sq[code], right_n);
          const double total = left_sse + right_sse;
          if (!best.found || total < best.sse) {
            best = {true, total, f, true, code};
          }
        }
      } else {
        sorted.clear();
        sorted.reserve(work.rows.size());
        for (std::size_t idx : work.rows)
          sorted.emplace_back(table.at(idx, f), table.target(idx));
        std::sort(sorted.begin(), sorted.end());
        double left_sum = 0.0, left_sq = 0.0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
          left_sum += sorted[i].second;
          left_sq += sorted[i].second * sorted[i].second;
          if (sorted[i].first == sorted[i + 1].first) continue;
          const double left_n = static_cast<double>(i + 1);
          const double right_n = n - left_n;
          if (left_n < static_cast<double>(params.min_leaf) ||
              right_n < static_cast<double>(params.min_leaf))
            continue;
          const double total =
              node_sse(left_sum, left_sq, left_n) +
              node_sse(sum - left_sum, sumsq - left_sq, right_n);
          if (!best.found || total < best.sse) {
            const double threshold =
                0.5 * (sorted[i].first + sorted[i + 1].first);
            best = {true, total, f, false, threshold};
          }
        }
      }
    }

    if (!best.found || best.sse >= parent_sse) continue;  // no useful split

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t idx : work.rows) {
      const double v = table.at(idx, best.feature);
      const bool goes_left =
          best.categorical ? v == best.threshold : v <= best.threshold;
      (goes_left ? left_rows : right_rows).push_back(idx);
    }

    const int left_id = static_cast<int>(nodes_.size());
    const int right_id = left_id + 1;
    nodes_.emplace_back();
    nodes_.emplace_back();
    // re-index the parent: emplace_back may have reallocated
    Node& parent = nodes_[work.node];
    parent.feature = static_cast<int>(best.feature);
    parent.categorical = best.categorical;
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = right_id;
    pending.push_back({static_cast<std::size_t>(left_id), std::move(left_rows),
                       work.depth + 1});
    pending.push_back({static_cast<std::size_t>(right_id),
                       std::move(right_rows), work.depth + 1});
  }
}

double RegressionTree::predict_row(std::span<const double> row) const {
  std::size_t at = 0;
  while (nodes_[at].feature >= 0) {
    const Node& node = nodes_[at];
    const double v = row[static_cast<std::size_t>(node.feature)];
    const bool goes_left =
        node.categorical ? v == node.threshold : v <= node.threshold;
    at = static_cast<std::size_t>(goes_left ? node.left : node.right);
  }
  return nodes_[at].value;
}

std::vector<double> RegressionTree::thresholds(std::size_t feature) const {
  std::vector<double> out;
  for (const Node& node : nodes_) {
    if (node.feature == static_cast<int>(feature) && !node.categorical)
      out.push_back(node.threshold);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ForestModel fit_forest(const DataTable& train, const ForestParams& params) {
  require(train.n_rows() >= 2, Errc::EmptyTraining,
          "forest fit needs at least 2 training rows");
  require(train.has_targets(), Errc::EmptyTraining,
          "forest fit needs target values");
  require(params.n_trees >= 1, Errc::EmptyTraining,
          "forest needs at least one tree");

  ForestModel model;
  model.params_ = params;
  model.schema_ = train.schema();
  model.trees_.resize(params.n_trees);
  model.in_bag_.assign(params.n_trees,
                       std::vector<std::uint32_t>(train.n_rows(), 0));

  const std::size_t n = train.n_rows();
  TreeParams tree_params;
  tree_params.max_depth = params.max_depth;
  tree_params.min_leaf = params.min_leaf;
  tree_params.n_candidate_features = static_cast<std::size_t>(
      std::ceil(static_cast<double>(train.n_cols()) / 3.0));

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng = make_rng(params.seed, t);
    std::vector<std::size_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) {
      sample[i] = uniform_index(rng, n);
      ++model.in_bag_[t][sample[i]];
    }
    model.trees_[t].fit(train, sample, tree_params, rng);
  }

  // out-of-bag predictions with full-ensemble fallback
  model.oob_.assign(n, 0.0);
  model.oob_covered_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < params.n_trees; ++t) {
      if (model.in_bag_[t][i] == 0) {
        sum += model.trees_[t].predict_row(train.row(i));
        ++count;
      }
    }
    if (count > 0) {
      model.oob_[i] = sum / static_cast<double>(count);
      model.oob_covered_[i] = true;
    } else {
      model.oob_[i] = model.predict_row(train.row(i));
    }
  }
  return model;
}

std::vector<double> ForestModel::predict(const DataTable& table) const {
  require(table.schema() == schema_, Errc::SchemaMismatch,
          "table schema differs from the training schema");
  std::vector<double> out(table.n_rows());
  for (std::size_t r = 0; r < table.n_rows(); ++r)
    out[r] = predict_row(table.row(r));
  return out;
}

double ForestModel::predict_row(std::span<const double> row) const {
  double sum = 0.0;
  for (const RegressionTree& tree : trees_) sum += tree.predict_row(row);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> ForestModel::member_predictions_row(
    std::span<const double> row) const {
  std::vector<double> out(trees_.size());
  for (std::size_t t = 0; t < trees_.size(); ++t)
    out[t] = trees_[t].predict_row(row);
  return out;
}

std::vector<std::vector<double>> ForestModel::per_member_predictions(
    const DataTable& table) const {
  require(table.schema() == schema_, Errc::SchemaMismatch,
          "table schema differs from the training schema");
  std::vector<std::vector<double>> out(trees_.size(),
                                       std::vector<double>(table.n_rows()));
  for (std::size_t t = 0; t < trees_.size(); ++t)
    for (std::size_t r = 0; r < table.n_rows(); ++r)
      out[t][r] = trees_[t].predict_row(table.row(r));
  return out;
}

namespace {

using nlohmann::json;

json node_to_json(const RegressionTree::Node& node) {
  json j;
  j["feature"] = node.feature;
  j["categorical"] = node.categorical;
  j["threshold"] = node.threshold;
  j["left"] = node.left;
  j["right"] = node.right;
  j["value"] = node.value;
  j["n"] = node.n;
  return j;
}

RegressionTree::Node node_from_json(const json& j) {
  RegressionTree::Node node;
  node.feature = j.at("feature").get<int>();
  node.categorical = j.at("categorical").get<bool>();
  node.threshold = j.at("threshold").get<double>();
  node.left = j.at("left").get<int>();
  node.right = j.at("right").get<int>();
  node.value = j.at("value").get<double>();
  node.n = j.at("n").get<std::size_t>();
  return node;
}

}  // namespace

std::string ForestModel::to_json() const {
  json doc;
  doc["version"] = 1;
  doc["kind"] = "forest";
  doc["params"] = {{"n_trees", params_.n_trees},
                   {"max_depth", params_.max_depth},
                   {"min_leaf", params_.min_leaf},
                   {"seed", params_.seed}};
  doc["schema"] = json::parse(schema_to_json(schema_, ""));
  json trees = json::array();
  for (const RegressionTree& tree : trees_) {
    json nodes = json::array();
    for (const auto& node : tree.nodes()) nodes.push_back(node_to_json(node));
    trees.push_back(std::move(nodes));
  }
  doc["trees"] = std::move(trees);
  doc["in_bag_counts"] = in_bag_;
  doc["oob_predictions"] = oob_;
  json covered = json::array();
  for (bool flag : oob_covered_) covered.push_back(flag ? 1 : 0);
  doc["oob_covered"] = std::move(covered);
  return doc.dump();
}

ForestModel ForestModel::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::BadModelFile, std::string("model JSON: ") + e.what());
  }
  require(doc.contains("version"), Errc::BadModelFile,
          "model file lacks a version field");
  require(doc["version"].get<int>() == 1, Errc::BadModelFile,
          "unsupported model version");
  require(doc.value("kind", "") == std::string("forest"), Errc::BadModelFile,
          "model file is not a forest dump");

  ForestModel model;
  try {
    const json& p = doc.at("params");
    model.params_.n_trees = p.at("n_trees").get<std::size_t>();
    model.params_.max_depth = p.at("max_depth").get<std::size_t>();
    model.params_.min_leaf = p.at("min_leaf").get<std::size_t>();
    model.params_.seed = p.at("seed").get<std::uint64_t>();
    model.schema_ = parse_schema(doc.at("schema").dump()).schema;
    for (const json& nodes : doc.at("trees")) {
      RegressionTree tree;
      for (const json& n : nodes) tree.nodes().push_back(node_from_json(n));
      require(!tree.nodes().empty(), Errc::BadModelFile, "tree with no nodes");
      model.trees_.push_back(std::move(tree));
    }
    model.in_bag_ =
        doc.at("in_bag_counts").get<std::vector<std::vector<std::uint32_t>>>();
    model.oob_ = doc.at("oob_predictions").get<std::vector<double>>();
    for (const json& flag : doc.at("oob_covered"))
      model.oob_covered_.push_back(flag.get<int>() != 0);
  } catch (const json::exception& e) {
    throw Error(Errc::BadModelFile, std::string("model JSON: ") + e.what());
  }
  require(model.trees_.size() == model.params_.n_trees, Errc::BadModelFile,
          "tree count does not match params");
  return model;
}

void ForestModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::IoFailure, "cannot write '" + path + "'");
  out << to_json();
  require(out.good(), Errc::IoFailure, "write to '" + path + "' failed");
}

ForestModel ForestModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoFailure, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace calx
