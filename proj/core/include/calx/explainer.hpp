#ifndef CALX_EXPLAINER_HPP
#define CALX_EXPLAINER_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calx/conformal.hpp"
#include "calx/dataset.hpp"
#include "calx/difficulty.hpp"
#include "calx/forest.hpp"
#include "calx/isotonic.hpp"
#include "calx/regressor.hpp"

namespace calx {

/// Shortest-ish display form used in rule text ("34.26", "2.5", "1e+06").
std::string format_number(double v);

/// Per-numerical-feature split thresholds from single-feature regression
/// trees (depth 1 for factual rules, depth 3 for counterfactual rules).
/// Categorical features carry no thresholds.
struct Discretizer {
  std::size_t depth = 1;
  std::vector<std::vector<double>> thresholds;  ///< ascending, deduplicated

  static Discretizer fit(const DataTable& calibration, std::size_t depth);

  /// Closest threshold to v (ties resolve to the lower threshold). Feature
  /// must have at least one threshold.
  double nearest_threshold(std::size_t f, double v) const;
};

struct Condition {
  enum class Kind { Equals, LessEq, Greater, Conjunction };
  Kind kind = Kind::LessEq;
  std::size_t feature = 0;
  double value = 0.0;  ///< threshold, or categorical code for Equals
  std::vector<Condition> parts;  ///< Conjunction only

  bool covers(std::span<const double> row) const;
  /// "f > 34.26", "f <= 34.26", "f = code"; conjunctions join with " & ".
  std::string text(const FeatureSchema& schema) const;
};

struct FeatureRule {
  Condition condition;
  std::size_t feature = 0;  ///< first constituent feature for conjunctions
  double weight = 0.0;
  double weight_low = 0.0;
  double weight_high = 0.0;
  /// Counterfactual modes carry the perturbed-group estimate and interval.
  bool has_estimate = false;
  double prediction_estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  double instance_value = 0.0;
  std::string instance_text;
  std::size_t coverage_count = 0;
  bool conjunctive = false;
};

enum class ExplanationMode {
  Factual,
  Counterfactual,
  FactualProbabilistic,
  CounterfactualProbabilistic,
};

const char* mode_name(ExplanationMode mode);

struct Explanation {
  ExplanationMode mode = ExplanationMode::Factual;
  /// Regression modes; low/high at the requested percentiles.
  PredictionSummary prediction;
  /// Probabilistic modes: calibrated P(y <= threshold).
  ProbabilityTriple probability;
  std::optional<double> threshold;
  double low_percentile = 5.0;
  double high_percentile = 95.0;
  std::vector<FeatureRule> rules;
  std::vector<std::string> diagnostics;  ///< suppressed-rule notes

  bool probabilistic() const {
    return mode == ExplanationMode::FactualProbabilistic ||
           mode == ExplanationMode::CounterfactualProbabilistic;
  }
};

/// One synthesized single-feature change.
struct PerturbationVariant {
  double value = 0.0;
  /// Group id: categorical variants use their code, numerical variants 0
  /// for the <= side and 1 for the > side of the nearest threshold.
  int group = 0;
  /// Whether the group this variant belongs to contains the instance's own
  /// value (for categorical variants: value equality).
  bool covers_instance = false;
};

struct PerturbationSet {
  std::size_t feature = 0;
  bool categorical = false;
  bool has_threshold = false;
  double threshold = 0.0;  ///< nearest depth-1 threshold (numerical only)
  std::vector<PerturbationVariant> variants;  ///< empty => rule suppressed
};

enum class TauMode { Fixed, SeededUniform };

struct ExplainerOptions {
  std::uint64_t seed = 42;
  double tau = 0.5;
  /// SeededUniform draws tau once from the seed at initialization; the
  /// default keeps explanations fully deterministic.
  TauMode tau_mode = TauMode::Fixed;
  /// beta for the unnormalized residual set (normalized runs take beta from
  /// the difficulty estimator).
  double beta = 0.01;
};

/// Calibrated explainer for regression models: conformal predictive systems
/// over calibration residuals, perturbation-based feature rules, and
/// Venn-Abers calibrated threshold probabilities.
///
/// The model and difficulty estimator are borrowed and must outlive the
/// explainer. All explain calls on an initialized instance are const and
/// safe to run concurrently.
class CalibratedExplainer {
 public:
  CalibratedExplainer() = default;
  CalibratedExplainer(const Regressor& model, DataTable calibration,
                      const DifficultyEstimator* difficulty = nullptr,
                      ExplainerOptions options = {});

  void initialize(const Regressor& model, DataTable calibration,
                  const DifficultyEstimator* difficulty = nullptr,
                  ExplainerOptions options = {});
  bool initialized() const { return model_ != nullptr; }

  /// Calibrated point prediction and percentile interval for one row.
  PredictionSummary predict(std::span<const double> row,
                            double low_percentile = 5.0,
                            double high_percentile = 95.0) const;

  Explanation explain_factual(std::span<const double> row,
                              double low_percentile = 5.0,
                              double high_percentile = 95.0) const;
  Explanation explain_counterfactual(std::span<const double> row,
                                     double low_percentile = 5.0,
                                     double high_percentile = 95.0) const;
  /// Calibrated P(y <= threshold) explanation; factual or counterfactual
  /// rule layout per `counterfactual`.
  Explanation explain_probabilistic(std::span<const double> row,
                                    double threshold,
                                    bool counterfactual = false) const;

  /// Appends Conjunction rules built from pairs (max_order 2) or pairs and
  /// triples (max_order 3) of distinct-feature rules among the top_n rules,
  /// then re-sorts by |weight|. Other orders raise OrderUnsupported.
  Explanation add_conjunctions(const Explanation& explanation,
                               std::span<const double> row,
                               std::size_t max_order = 2,
                               std::size_t top_n = 5) const;

  /// Factual-flavored perturbation sets (depth-1 discretizer, two groups
  /// split at the nearest threshold, 25/50/75th percentile values).
  std::vector<PerturbationSet> perturbation_sets(
      std::span<const double> row) const;

  const Cps& cps() const { return cps_; }
  const Cps& cps_p() const { return cps_p_; }
  const Discretizer& factual_discretizer() const { return disc_factual_; }
  const Discretizer& counterfactual_discretizer() const { return disc_cf_; }
  const DataTable& calibration() const { return calibration_; }
  double tau() const { return tau_; }

  /// Venn-Abers calibrators are built once per distinct threshold and then
  /// reused across instances.
  std::size_t va_fit_count() const;

  /// CPD for one row against the full-calibration system (plot emission).
  Cpd cpd_for(std::span<const double> row) const;

 private:
  struct Calibrated {
    double center = 0.0;
    double low = 0.0;
    double high = 0.0;
  };

  const Regressor* model_ = nullptr;
  DataTable calibration_;
  const DifficultyEstimator* difficulty_ = nullptr;
  ExplainerOptions options_;
  double tau_ = 0.5;

  Cps cps_;    ///< full calibration set
  Cps cps_p_;  ///< first ceil(q/2) rows, feeds threshold scores
  std::vector<double> cal_predictions_;
  std::vector<double> cal_sigmas_;  ///< empty when unnormalized
  std::vector<std::size_t> va_rows_;  ///< complementary half for Venn-Abers

  Discretizer disc_factual_;  ///< depth 1
  Discretizer disc_cf_;       ///< depth 3
  std::vector<std::vector<double>> sorted_columns_;
  std::vector<std::vector<double>> observed_codes_;  ///< ascending, categorical

  mutable std::unique_ptr<std::mutex> va_mutex_;
  mutable std::map<double, std::unique_ptr<VennAbersCalibrator>> va_cache_;
  mutable std::size_t va_fits_ = 0;

  void require_initialized() const;
  double sigma_for(std::span<const double> row) const;
  Calibrated calibrate_regression(std::span<const double> row,
                                  double low_percentile,
                                  double high_percentile) const;
  Calibrated calibrate_probability(std::span<const double> row,
                                   double threshold) const;
  double va_score(double margin) const;
  double threshold_margin(std::span<const double> row, double threshold) const;
  const VennAbersCalibrator& va_for(double threshold) const;
  std::size_t coverage(const Condition& condition) const;
  std::vector<double> region_values(std::size_t feature,
                                    const Condition& condition) const;
  std::vector<double> rule_variant_values(const FeatureRule& rule,
                                          std::span<const double> row,
                                          bool factual) const;
  Explanation explain_rules(std::span<const double> row, bool counterfactual,
                            bool probabilistic, double low_percentile,
                            double high_percentile, double threshold) const;
};

}  // namespace calx

#endif
