#ifndef CALX_HARNESS_HPP
#define CALX_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "calx/dataset.hpp"
#include "calx/difficulty.hpp"
#include "calx/explainer.hpp"
#include "calx/forest.hpp"

namespace calx {

/// Mean that returns the common value exactly when all entries are equal.
double exact_mean(const std::vector<double>& xs);
/// Population variance (n divisor); exactly 0 for identical entries.
double population_variance(const std::vector<double>& xs);

enum class EvalMode { Fcer, Ccer, Pfcer, Pccer };
enum class Normalization { None, Distance, TargetStd, AbsError, Variance };

/// Stability reseeds the explainer per repetition (IterationAsSeed) or
/// reuses the configured seed everywhere (Fixed, a determinism control).
enum class SeedPolicy { IterationAsSeed, Fixed };

const char* eval_mode_name(EvalMode mode);
const char* normalization_name(Normalization norm);
EvalMode parse_eval_mode(const std::string& name);
Normalization parse_normalization(const std::string& name);

struct EvalConfig {
  std::size_t repetitions = 100;
  std::size_t n_test = 10;
  std::size_t calibration_size = 500;
  double proper_training_fraction = 0.5;
  double threshold = 0.5;  ///< probabilistic modes
  double low_percentile = 5.0;
  double high_percentile = 95.0;
  std::vector<EvalMode> modes = {EvalMode::Fcer, EvalMode::Ccer,
                                 EvalMode::Pfcer, EvalMode::Pccer};
  /// Stability/robustness use the first entry; runtime sweeps all of them.
  std::vector<Normalization> normalizations = {Normalization::None};
  ForestParams forest;
  DifficultyOptions difficulty;
  /// Reference rows for kNN difficulty, drawn from the front of the
  /// shuffled training split.
  std::size_t difficulty_reference_cap = 500;
  std::uint64_t seed = 42;
  SeedPolicy seed_policy = SeedPolicy::IterationAsSeed;
  TauMode tau_mode = TauMode::Fixed;
};

struct EvalCell {
  Normalization normalization = Normalization::None;
  EvalMode mode = EvalMode::Fcer;
  double value = 0.0;
  /// Stability/robustness only: per test instance, the feature whose rule
  /// variance the cell aggregates.
  std::vector<std::size_t> top_features;
};

struct EvalReport {
  std::string metric;  ///< "stability" | "robustness" | "runtime"
  std::vector<EvalCell> cells;
  /// Robustness baseline: mean over instances of the prediction variance
  /// across repetitions.
  double prediction_variance = 0.0;
  bool has_prediction_variance = false;
  bool empty = false;  ///< no test instances; cell values are meaningless

  std::string to_json() const;
  std::string to_csv() const;
};

/// Fixed model and calibration; per repetition the seed is the iteration
/// counter. Reported value per mode: mean over test instances of the
/// variance of the top feature's weight (prediction estimate for
/// counterfactual modes), where the top feature is the mode of the rank-1
/// features across repetitions (ties to the lowest feature index).
EvalReport measure_stability(const DataTable& data, const EvalConfig& config);

/// Fresh training/calibration draw and model fit per repetition (repetition
/// seeds the draw); fixed test instances and explainer seed. Same statistic
/// as stability, plus the mean prediction variance baseline.
EvalReport measure_robustness(const DataTable& data, const EvalConfig& config);

/// Seconds per explanation call (state setup excluded) over the
/// normalization x mode grid.
EvalReport measure_runtime(const DataTable& data, const EvalConfig& config);

}  // namespace calx

#endif
