#ifndef CALX_FOREST_HPP
#define CALX_FOREST_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calx/dataset.hpp"
#include "calx/random.hpp"
#include "calx/regressor.hpp"

namespace calx {

struct TreeParams {
  std::size_t max_depth = 0;  ///< 0 = unlimited
  std::size_t min_leaf = 1;
  /// Candidate features drawn per split; 0 = evaluate all features.
  std::size_t n_candidate_features = 0;
};

/// Axis-aligned regression tree minimizing child SSE. Numerical splits test
/// value <= threshold (thresholds are midpoints between consecutive distinct
/// values); categorical splits test code equality. Ties between equally good
/// splits resolve to the lowest feature index, then the lowest threshold or
/// code.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    bool categorical = false;
    double threshold = 0.0;  ///< split code for categorical features
    int left = -1;
    int right = -1;
    double value = 0.0;  ///< mean target of the rows routed here
    std::size_t n = 0;
  };

  /// `indices` may repeat rows (bootstrap multiplicity counts toward leaf
  /// means and min_leaf).
  void fit(const DataTable& table, const std::vector<std::size_t>& indices,
           const TreeParams& params, Rng& rng);

  double predict_row(std::span<const double> row) const;

  /// Sorted, deduplicated numerical thresholds used anywhere in the tree for
  /// one feature.
  std::vector<double> thresholds(std::size_t feature) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  ///< 0 = unlimited
  std::size_t min_leaf = 1;
  std::uint64_t seed = 42;
};

/// Bagged ensemble of regression trees with per-split feature subsampling
/// (ceil(d/3) candidates). Identical seeds produce identical models.
class ForestModel final : public Regressor {
 public:
  std::vector<double> predict(const DataTable& table) const override;
  double predict_row(std::span<const double> row) const override;

  bool has_member_predictions() const override { return true; }
  std::vector<double> member_predictions_row(
      std::span<const double> row) const override;

  /// [tree][row] predictions for a whole table.
  std::vector<std::vector<double>> per_member_predictions(
      const DataTable& table) const;

  /// Out-of-bag prediction per training row; rows that landed in every
  /// bootstrap fall back to the full-ensemble prediction and are flagged
  /// false in oob_coverage().
  const std::vector<double>& oob_predictions() const { return oob_; }
  const std::vector<bool>& oob_coverage() const { return oob_covered_; }

  const std::vector<RegressionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }
  const FeatureSchema& schema() const { return schema_; }
  /// [tree][training row] bootstrap multiplicity.
  const std::vector<std::vector<std::uint32_t>>& bootstrap_counts() const {
    return in_bag_;
  }

  std::string to_json() const;
  static ForestModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static ForestModel load(const std::string& path);

  friend ForestModel fit_forest(const DataTable& train,
                                const ForestParams& params);

 private:
  ForestParams params_;
  FeatureSchema schema_;
  std::vector<RegressionTree> trees_;
  std::vector<std::vector<std::uint32_t>> in_bag_;
  std::vector<double> oob_;
  std::vector<bool> oob_covered_;
};

ForestModel fit_forest(const DataTable& train, const ForestParams& params);

inline ForestModel fit_forest(const DataTable& train, std::size_t n_trees,
                              std::size_t max_depth, std::size_t min_leaf,
                              std::uint64_t seed) {
  return fit_forest(train, ForestParams{n_trees, max_depth, min_leaf, seed});
}

}  // namespace calx

#endif
