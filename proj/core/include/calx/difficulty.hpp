#ifndef CALX_DIFFICULTY_HPP
#define CALX_DIFFICULTY_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "calx/dataset.hpp"
#include "calx/regressor.hpp"

namespace calx {

enum class DifficultyMode {
  KnnDistance,     ///< mean Euclidean distance to the k nearest references
  KnnTargetStd,    ///< population std of the k nearest references' targets
  KnnAbsError,     ///< mean absolute residual of the k nearest references
  EnsembleVariance,  ///< population variance of per-member predictions
};

struct DifficultyOptions {
  /// Defaults to 25, silently capped at the reference row count. An explicit
  /// k above the reference size raises KTooLarge.
  std::optional<std::size_t> k;
  bool scale = true;  ///< min-max scale numerical features before kNN
  double beta = 0.01;
};

/// Per-mode payload: targets for KnnTargetStd, residuals for KnnAbsError,
/// a member-capable model for EnsembleVariance.
struct DifficultyPayload {
  std::vector<double> targets;
  std::vector<double> residuals;
  const Regressor* model = nullptr;
};

/// Per-instance difficulty sigma >= 0. Neighbor search is brute force over
/// the reference rows; distance ties resolve to the lowest reference index.
/// Categorical features contribute 0/1 mismatch distance.
class DifficultyEstimator {
 public:
  static DifficultyEstimator fit(DifficultyMode mode,
                                 const DataTable& reference,
                                 const DifficultyPayload& payload,
                                 const DifficultyOptions& options = {});

  std::vector<double> estimate(const DataTable& rows) const;
  double estimate_row(std::span<const double> row) const;

  DifficultyMode mode() const { return mode_; }
  double beta() const { return beta_; }
  std::size_t k() const { return k_; }
  const DataTable& reference() const { return reference_; }
  const std::vector<double>& payload_values() const { return values_; }
  bool scaled() const { return scale_; }

 private:
  DifficultyMode mode_ = DifficultyMode::KnnDistance;
  DataTable reference_;
  std::vector<double> values_;  ///< targets or residual magnitudes
  const Regressor* model_ = nullptr;
  std::size_t k_ = 25;
  bool scale_ = true;
  double beta_ = 0.01;
  std::vector<double> offset_;  ///< per-feature min (numerical, scaled mode)
  std::vector<double> factor_;  ///< per-feature 1/range, 1 when degenerate

  std::vector<std::size_t> nearest(std::span<const double> row) const;
  double scaled_at(std::size_t ref_row, std::size_t f) const;
  double scale_value(double v, std::size_t f) const;
};

}  // namespace calx

#endif
