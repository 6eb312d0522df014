#ifndef CALX_CONFORMAL_HPP
#define CALX_CONFORMAL_HPP

#include <optional>
#include <vector>

namespace calx {

/// Signed calibration residuals y_i - h(x_i), optionally with per-row
/// difficulty estimates for normalization.
struct ResidualSet {
  std::vector<double> residuals;
  /// Empty for the unnormalized variant; otherwise one sigma per residual.
  std::vector<double> sigmas;
  double beta = 0.01;
};

/// Conformal predictive system: sorted nonconformity scores plus the
/// normalization contract they were produced under.
struct Cps {
  std::vector<double> alphas;  ///< ascending
  bool normalized = false;
  double beta = 0.01;

  std::size_t q() const { return alphas.size(); }
};

/// Conformal predictive distribution for one instance: ascending candidate
/// targets C_(1..q) plus the tie-smoothing parameter tau.
struct Cpd {
  std::vector<double> c_values;  ///< ascending
  double tau = 0.5;

  std::size_t q() const { return c_values.size(); }
};

struct PredictionSummary {
  double median = 0.0;
  double low = 0.0;
  double high = 0.0;
  double low_percentile = 0.0;
  double high_percentile = 0.0;

  /// True when a requested finite percentile degraded to an infinite bound
  /// because the index fell outside [1, q].
  bool low_degenerate = false;
  bool high_degenerate = false;
};

/// Sorted scores. Unnormalized: alpha_i = r_i. Normalized:
/// alpha_i = r_i / (sigma_i + beta); requires one sigma per residual with
/// sigma_i + beta > 0.
Cps nonconformity_scores(const ResidualSet& set);

/// C_(i) = prediction + alpha_i, or prediction + sigma * alpha_i for a
/// normalized system. sigma is required exactly when cps.normalized.
Cpd build_cpd(const Cps& cps, double prediction,
              std::optional<double> sigma = std::nullopt, double tau = 0.5);

/// P(Y <= y): (i + tau) / (q + 1) inside the open gap above C_(i); at an
/// exact hit the tied block with lowest index i' and highest index i''
/// evaluates to (i' - 1 + (i'' - i' + 2) tau) / (q + 1).
double cdf_at(const Cpd& cpd, double y);

/// Two-sided or one-sided percentile interval plus the median
/// (C_(ceil(.5(q+1))) + C_(floor(.5(q+1)))) / 2. Bounds use
/// C_(floor(p_low/100 (q+1))) and C_(ceil(p_high/100 (q+1))); indices
/// outside [1, q] degrade to infinite bounds (flagged, not an error).
/// Pass -inf / +inf percentiles for one-sided intervals.
PredictionSummary interval(const Cpd& cpd, double low_percentile,
                           double high_percentile);

/// P(Y <= threshold) for a threshold query; threshold must be finite.
double threshold_probability(const Cpd& cpd, double threshold);

}  // namespace calx

#endif
